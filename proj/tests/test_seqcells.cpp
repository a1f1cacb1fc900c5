#include <doctest.h>

#include <cmath>
#include <vector>

#include "emn/cells.hpp"
#include "emn/config.hpp"
#include "emn/params.hpp"
#include "emn/rng.hpp"
#include "oracles.hpp"

using namespace emn;

namespace {

using oracle::vec;

GruParams random_gru(std::size_t in, std::size_t hid, Rng& rng) {
    GruParams p = GruParams::random(in, hid, rng);
    for (Tensor* b : {&p.b_z, &p.b_r, &p.b_h}) *b = rng.uniform_vector(hid, -0.5, 0.5);
    for (Tensor* m : {&p.w_z, &p.u_z, &p.w_r, &p.u_r, &p.w_h, &p.u_h})
        for (double& v : m->values()) v *= 10.0;
    return p;
}

}  // namespace

TEST_CASE("gru_step closed forms") {
    const GruParams zero = GruParams::zeros(3, 3);
    const Tensor v = Tensor::from({0.4, -2.0, 1.0});
    CHECK(gru_step(zero, v, Tensor::from({1, 1, 1})) == Tensor::from({0.2, -1.0, 0.5}));
    CHECK(gru_step(zero, Tensor::zeros(3), Tensor::from({1, 1, 1})) == Tensor::zeros(3));
}

TEST_CASE("gru_step matches a scalar transcription exactly") {
    Rng rng(101);
    for (int trial = 0; trial < 5; ++trial) {
        const GruParams p = random_gru(3, 3, rng);
        const Tensor h = rng.uniform_vector(3, -1, 1), x = rng.uniform_vector(3, -1, 1);
        CHECK(vec(gru_step(p, h, x)) == oracle::gru(p, vec(h), vec(x)));
    }
    const GruParams p = random_gru(2, 3, rng);
    CHECK_THROWS_AS(gru_step(p, Tensor::zeros(3), Tensor::zeros(3)), DimensionError);
}

TEST_CASE("gru_step with a closed update gate keeps the previous state") {
    Rng rng(5);
    GruParams p = random_gru(4, 4, rng);
    p.b_z = Tensor::filled(4, -50.0);
    for (double& v : p.w_z.values()) v *= 0.01;
    for (double& v : p.u_z.values()) v *= 0.01;
    const Tensor h = rng.uniform_vector(4, -1, 1);
    CHECK(max_abs_diff(gru_step(p, h, rng.uniform_vector(4, -1, 1)), h) < 1e-12);
}

TEST_CASE("lstm_step") {
    const LstmCellParams zero = LstmCellParams::zeros(2, 2);
    const LstmState s = lstm_step(zero, {Tensor::zeros(2), Tensor::zeros(2)}, Tensor::from({1, -1}));
    CHECK(s.h == Tensor::zeros(2));
    CHECK(s.c == Tensor::zeros(2));

    Rng rng(8);
    LstmCellParams sat = LstmCellParams::random(2, 2, rng);
    sat.b_f = Tensor::filled(2, 50.0);
    sat.b_i = Tensor::filled(2, -50.0);
    const Tensor c0 = Tensor::from({0.7, -0.3});
    const LstmState carried = lstm_step(sat, {rng.uniform_vector(2, -1, 1), c0}, rng.uniform_vector(2, -1, 1));
    CHECK(max_abs_diff(carried.c, c0) < 1e-3);

    for (int trial = 0; trial < 5; ++trial) {
        LstmCellParams p = LstmCellParams::random(2, 2, rng);
        for (Tensor* m : {&p.w_i, &p.u_i, &p.w_f, &p.u_f, &p.w_o, &p.u_o, &p.w_c, &p.u_c, &p.b_i, &p.b_o, &p.b_c})
            *m = m->is_matrix() ? rng.uniform_matrix(2, 2, -1, 1) : rng.uniform_vector(2, -1, 1);
        const Tensor h = rng.uniform_vector(2, -1, 1), c = rng.uniform_vector(2, -1, 1), x = rng.uniform_vector(2, -1, 1);
        std::vector<double> hs = vec(h), cs = vec(c);
        oracle::lstm(p, hs, cs, vec(x));
        const LstmState out = lstm_step(p, {h, c}, x);
        CHECK(vec(out.h) == hs);
        CHECK(vec(out.c) == cs);
    }
}

TEST_CASE("three-step GRU and LSTM chains pass gradient checks") {
    Rng rng(12);
    GruParams g = random_gru(5, 4, rng);
    for (Tensor* m : {&g.w_z, &g.u_z, &g.w_r, &g.u_r, &g.w_h, &g.u_h})
        for (double& v : m->values()) v *= 0.1;
    LstmCellParams l = LstmCellParams::random(5, 4, rng);
    std::vector<Tensor> xs;
    for (int i = 0; i < 3; ++i) xs.push_back(rng.uniform_vector(5, -1, 1));
    Tensor h0 = rng.uniform_vector(4, -1, 1), c0 = rng.uniform_vector(4, -1, 1);

    ParamView gv;
    g.collect(gv, "");
    gv.add("h0", h0);
    auto gru_chain = [&](Tape& t) {
        const GruVars v = GruVars::bind(t, g);
        Var h = t.param(h0);
        for (const Tensor& x : xs) h = gru_step(t, v, h, t.constant(x));
        return t.sum(t.tanh(h));
    };
    CHECK(grad_check(gru_chain, gv, 1e-5).max_rel_error < 1e-4);

    ParamView lv;
    l.collect(lv, "");
    lv.add("h0", h0);
    lv.add("c0", c0);
    auto lstm_chain = [&](Tape& t) {
        const LstmCellVars v = LstmCellVars::bind(t, l);
        LstmStateVars s{t.param(h0), t.param(c0)};
        for (const Tensor& x : xs) s = lstm_step(t, v, s, t.constant(x));
        return t.add(t.sum(s.h), t.sqnorm(s.c));
    };
    CHECK(grad_check(lstm_chain, lv, 1e-5).max_rel_error < 1e-4);
}

TEST_CASE("encode") {
    Rng rng(3);
    const LstmParams p = LstmParams::random(9, 6, 5, rng);
    const SentenceVec one = encode(p, {4});
    const LstmState s = lstm_step(p.encoder, {Tensor::zeros(5), Tensor::zeros(5)}, p.embedding.row(4));
    CHECK(one.value == s.h);
    const std::vector<WordId> sentence{3, 5, 7, 8};
    CHECK(encode(p, sentence).value == encode(p, sentence).value);
    CHECK(encode(p, sentence).value.size() == 5);
    CHECK(encode(p, {3, 5}).value.size() == 5);
    CHECK_THROWS_AS(encode(p, {}), Error);
    CHECK_THROWS_AS(encode(p, {9}), Error);
}

TEST_CASE("decode is bounded and breaks ties to the lowest id") {
    Rng rng(4);
    LstmParams p = LstmParams::random(7, 4, 4, rng);
    const SentenceVec s = encode(p, {3, 4, 5});
    CHECK(decode(p, s, 6).size() <= 6);
    p.out_w = Tensor::zeros(7, 4);
    p.out_b = Tensor::zeros(7);
    CHECK(decode(p, s, 3) == std::vector<WordId>{0, 0, 0});
    p.out_b[5] = 1.0;
    p.out_b[6] = 1.0;
    CHECK(decode(p, s, 2) == std::vector<WordId>{5, 5});
    p.out_b[kEosId] = 2.0;
    CHECK(decode(p, s, 4).empty());
}

TEST_CASE("autoencoder memorises a small corpus") {
    // 10 sentences over 12 words (ids 3..14).
    std::vector<std::vector<WordId>> corpus;
    Rng pick(21);
    for (int i = 0; i < 10; ++i) {
        std::vector<WordId> s;
        const std::size_t len = 3 + pick.index(3);
        for (std::size_t k = 0; k < len; ++k) s.push_back(3 + pick.index(12));
        corpus.push_back(s);
    }
    TrainConfig cfg;
    cfg.ae_epochs = 200;
    cfg.ae_lr = 0.5;
    cfg.ae_target_accuracy = 1.0;
    Rng rng(1);
    const LstmParams init = LstmParams::random(15, 16, 16, rng);
    const PretrainResult r = pretrain_autoencoder(corpus, init, cfg, rng);
    CHECK(r.epoch_loss.size() <= 200);
    CHECK(r.epoch_loss.front() < r.initial_loss);
    for (std::size_t i = 1; i < r.epoch_loss.size(); ++i) CHECK(r.epoch_loss[i] <= r.epoch_loss[i - 1]);
    CHECK(reconstruction_accuracy(r.params, corpus) >= 0.95);
}

TEST_CASE("autoencoder on identical one-token sentences") {
    const std::vector<std::vector<WordId>> corpus(5, std::vector<WordId>{3});
    TrainConfig cfg;
    cfg.ae_epochs = 30;
    cfg.ae_lr = 0.5;
    Rng rng(2);
    const PretrainResult r = pretrain_autoencoder(corpus, LstmParams::random(4, 8, 8, rng), cfg, rng);
    CHECK(reconstruction_accuracy(r.params, corpus) == 1.0);
    CHECK_THROWS_AS(pretrain_autoencoder({}, LstmParams::random(4, 8, 8, rng), cfg, rng), Error);
}

TEST_CASE("autoencoder loss passes a gradient check") {
    Rng rng(6);
    LstmParams p = LstmParams::random(6, 3, 3, rng);
    ParamView view;
    p.collect(view, "");
    auto fn = [&](Tape& t) { return autoencoder_loss(t, LstmVars::bind(t, p), {3, 4, 5}); };
    CHECK(grad_check(fn, view, 1e-4).max_rel_error < 1e-4);
}
