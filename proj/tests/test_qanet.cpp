#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "emn/pipeline.hpp"
#include "emn/qanet.hpp"
#include "emn/rng.hpp"
#include "oracles.hpp"

using namespace emn;

namespace {

void fill(ParamView view, Rng& rng, double scale) {
    for (const auto& [name, t] : view)
        for (double& v : t->values()) v = rng.uniform(-scale, scale);
}

RetrievalParams random_retrieval(std::size_t d_ent, std::size_t d_sent, Rng& rng, double scale = 1.0) {
    RetrievalParams p = RetrievalParams::zeros(d_ent, d_sent);
    ParamView view;
    p.collect(view, "");
    fill(view, rng, scale);
    return p;
}

ResponseParams random_response(std::size_t vocab, std::size_t d_sent, std::size_t d_emb, Rng& rng) {
    ResponseParams p = ResponseParams::zeros(vocab, d_sent, d_emb);
    ParamView view;
    p.collect(view, "");
    fill(view, rng, 1.0);
    return p;
}

Tensor tanh_of(Tensor v) {
    for (double& x : v.values()) x = std::tanh(x);
    return v;
}

double manual_score(const RetrievalParams& p, const Tensor& e, const Tensor& q) {
    return oracle::score(p, oracle::vec(e), oracle::vec(q));
}

Tensor manual_answer(const ResponseParams& p, const Tensor& o) { return Tensor::from(oracle::answer(p, oracle::vec(o))); }

MemoryPool random_pool(std::size_t n, std::size_t d, Rng& rng) {
    MemoryPool pool("p");
    for (std::size_t i = 0; i < n; ++i) pool.insert({"e" + std::to_string(i), rng.uniform_vector(d, -1, 1), i});
    return pool;
}

}  // namespace

TEST_CASE("score_entity") {
    const RetrievalParams zero = RetrievalParams::zeros(2, 2);
    CHECK(score_entity(zero, Tensor::from({1, 2}), Tensor::from({-1, 3})) == 0.5);
    Rng rng(10);
    for (int trial = 0; trial < 20; ++trial) {
        const RetrievalParams p = random_retrieval(2, 2, rng, 2.0);
        const Tensor e = rng.uniform_vector(2, -3, 3), q = rng.uniform_vector(2, -1, 1);
        const double s = score_entity(p, e, q);
        CHECK(s > 0.0);
        CHECK(s < 1.0);
        CHECK(s == manual_score(p, e, q));
    }
    const RetrievalParams p = random_retrieval(2, 2, rng);
    CHECK_THROWS_AS(score_entity(p, Tensor::zeros(3), Tensor::zeros(2)), DimensionError);
}

TEST_CASE("output_feature special cases") {
    Rng rng(20);
    const RetrievalParams p = random_retrieval(3, 3, rng);
    const Tensor q = rng.uniform_vector(3, -1, 1);
    CHECK(output_feature(random_pool(1, 3, rng), q, p, 3, 1e-3).hops.size() == 1);
    CHECK(output_feature(random_pool(4, 3, rng), q, p, 3, 1e9).hops.size() == 1);
    CHECK_THROWS_AS(output_feature(MemoryPool("x"), q, p, 3, 1e-3), EmptyPoolError);
    try {
        output_feature(MemoryPool("x"), q, p, 3, 1e-3);
    } catch (const EmptyPoolError& e) {
        CHECK(std::string(e.what()).find("no entities to retrieve") != std::string::npos);
    }
}

TEST_CASE("output_feature matches a hand unroll over two hops") {
    Rng rng(30);
    for (int trial = 0; trial < 10; ++trial) {
        const RetrievalParams p = random_retrieval(2, 2, rng);
        const MemoryPool pool = random_pool(2, 2, rng);
        const Tensor q = rng.uniform_vector(2, -1, 1);
        const RetrievalTrace trace = output_feature(pool, q, p, 2, 1e-12);

        const oracle::Vec qv = oracle::vec(q);
        const oracle::TwoHops want =
            oracle::two_hops(p, oracle::vec(pool.slot(0).state), oracle::vec(pool.slot(1).state), qv);
        double dist = 0.0, norm = 0.0;
        for (std::size_t i = 0; i < qv.size(); ++i) {
            dist += (want.o1[i] - qv[i]) * (want.o1[i] - qv[i]);
            norm += qv[i] * qv[i];
        }

        REQUIRE(trace.hops.size() == 2);
        CHECK(trace.hops[0].token == (want.first == 0 ? "e0" : "e1"));
        CHECK(trace.hops[0].score == want.p1);
        CHECK(trace.hops[1].score == want.p2);
        CHECK(trace.hops[0].change == std::sqrt(dist) / std::max(std::sqrt(norm), 1e-8));
        CHECK(oracle::vec(trace.output) == want.output);
    }
}

TEST_CASE("retrieval invariants over pools of one to five entities") {
    Rng rng(40);
    std::size_t early = 0;
    for (std::size_t n = 1; n <= 5; ++n) {
        for (std::size_t max_hops = 1; max_hops <= 6; ++max_hops) {
            for (double eps : {1e-6, 1e-3, 0.05, 0.3, 1e9}) {
                for (int trial = 0; trial < 8; ++trial) {
                    const RetrievalParams p = random_retrieval(3, 3, rng);
                    const MemoryPool pool = random_pool(n, 3, rng);
                    const RetrievalTrace t = output_feature(pool, rng.uniform_vector(3, -1, 1), p, max_hops, eps);
                    std::set<std::string> seen;
                    for (const auto& h : t.hops) seen.insert(h.token);
                    CHECK(seen.size() == t.hops.size());
                    CHECK(t.hops.size() >= 1);
                    CHECK(t.hops.size() <= std::min(max_hops, n));
                    for (std::size_t j = 0; j + 1 < t.hops.size(); ++j) CHECK(t.hops[j].change >= eps);
                    if (t.hops.size() < std::min(max_hops, n)) {
                        CHECK(t.hops.back().change < eps);
                        ++early;
                    }
                }
            }
        }
        CHECK_THROWS_AS(output_feature(MemoryPool("e"), Tensor::zeros(3), random_retrieval(3, 3, rng), 3, 1e-3),
                        EmptyPoolError);
    }
    CHECK(early > 0);
}

TEST_CASE("hop-one selection ignores the score bias") {
    Rng rng(50);
    for (int trial = 0; trial < 50; ++trial) {
        RetrievalParams p = random_retrieval(3, 3, rng);
        const MemoryPool pool = random_pool(5, 3, rng);
        const Tensor q = rng.uniform_vector(3, -1, 1);
        const std::string first = output_feature(pool, q, p, 1, 1e-3).hops[0].token;
        p.score_b[0] += rng.uniform(-5, 5);
        CHECK(output_feature(pool, q, p, 1, 1e-3).hops[0].token == first);
    }
}

TEST_CASE("answer_word") {
    const Tensor uniform = answer_word(ResponseParams::zeros(4, 2, 2), Tensor::from({0.3, 0.9}));
    for (double v : uniform.values()) CHECK(v == 0.25);
    Rng rng(60);
    for (int trial = 0; trial < 10; ++trial) {
        const ResponseParams p = random_response(3, 2, 2, rng);
        const Tensor o = rng.uniform_vector(2, -1, 1);
        const Tensor dist = answer_word(p, o);
        double total = 0.0;
        for (double v : dist.values()) total += v;
        CHECK(std::abs(total - 1.0) < 1e-12);
        CHECK(dist == manual_answer(p, o));
    }
}

TEST_CASE("answer_sequence") {
    Rng rng(70);
    const Tensor embedding = rng.uniform_matrix(5, 2, -1, 1);
    for (int trial = 0; trial < 10; ++trial) {
        ResponseParams p = random_response(5, 2, 2, rng);
        const Tensor o = rng.uniform_vector(2, -1, 1);
        const auto one = answer_sequence(p, embedding, o, 1);
        const WordId first = argmax(answer_word(p, o));
        CHECK(one == (first == kEosId ? std::vector<WordId>{} : std::vector<WordId>{first}));
        CHECK(answer_sequence(p, embedding, o, 4) == answer_sequence(p, embedding, o, 4));
    }
    // Vocabulary of three where eos can never win: two emitted words.
    for (int trial = 0; trial < 10; ++trial) {
        ResponseParams p = random_response(3, 2, 2, rng);
        p.out_w(kEosId, 0) = p.out_w(kEosId, 1) = 0.0;
        p.out_b[kEosId] = -50.0;
        const Tensor emb = rng.uniform_matrix(3, 2, -1, 1);
        const Tensor o0 = rng.uniform_vector(2, -1, 1);
        const WordId w0 = argmax(manual_answer(p, o0));
        const Tensor o1 = tanh_of(gru_step(p.seq_gru, o0, emb.row(w0)));
        const WordId w1 = argmax(manual_answer(p, o1));
        CHECK(answer_sequence(p, emb, o0, 2) == std::vector<WordId>{w0, w1});
    }
    CHECK_THROWS_AS(answer_sequence(ResponseParams::zeros(3, 2, 2), embedding, Tensor::zeros(2), 0), Error);
}

namespace {

double eval_scalar(const std::function<Var(Tape&)>& fn) {
    Tape t;
    return t.scalar(fn(t));
}

EntityScores constant_scores(Tape& t, const std::vector<std::pair<std::string, double>>& s) {
    EntityScores out;
    for (const auto& [token, p] : s) out.emplace_back(token, t.constant(Tensor::scalar(p)));
    return out;
}

}  // namespace

TEST_CASE("loss closed forms") {
    const Tensor dist = Tensor::from({0.0, 0.0, 0.0, 0.9, 0.1});
    const double satisfied = eval_scalar([&](Tape& t) {
        return loss_full(t, {"mary"}, constant_scores(t, {{"mary", 0.9}, {"john", 0.2}}), t.constant(dist), 3, {}, 0.1,
                         1e-4, {t.constant(Tensor::zeros(3))});
    });
    CHECK(satisfied == 0.0);
    const double pair = eval_scalar([&](Tape& t) {
        return loss_full(t, {"mary"}, constant_scores(t, {{"mary", 0.5}, {"john", 0.45}}), t.constant(dist), 3, {}, 0.1,
                         0.0, {});
    });
    CHECK(pair == doctest::Approx(0.05).epsilon(1e-12));
    const double weak_zero = eval_scalar([&](Tape& t) {
        return loss_weak(t, t.constant(dist), 3, {}, 0.1, 1.0, {t.constant(Tensor::zeros(2))});
    });
    CHECK(weak_zero == 0.0);
    Tape t;
    CHECK_THROWS_AS(loss_full(t, {}, {}, t.constant(dist), 3, {}, 0.1, 0.0, {}), Error);
    CHECK_THROWS_AS(loss_weak(t, t.constant(dist), 3, {}, 0.0, 0.0, {}), Error);
}

TEST_CASE("losses against brute-force pair enumeration") {
    Rng rng(80);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t V = 3 + rng.index(6), n = 2 + rng.index(5);
        std::vector<double> d(V);
        double total = 0.0;
        for (double& v : d) total += (v = rng.uniform(0.01, 1.0));
        for (double& v : d) v /= total;
        std::vector<std::pair<std::string, double>> scores;
        std::vector<std::string> related;
        for (std::size_t k = 0; k < n; ++k) {
            scores.push_back({"e" + std::to_string(k), rng.uniform(0, 1)});
            if (k == 0 || rng.index(3) == 0) related.push_back(scores.back().first);
        }
        std::vector<WordId> candidates;
        if (rng.index(2) == 0)
            for (WordId w = 0; w < V; ++w)
                if (rng.index(2) == 0) candidates.push_back(w);
        const WordId answer = rng.index(V);
        const double gamma = rng.uniform(0.05, 1.0), lambda = rng.uniform(0.0, 0.1);
        const Tensor theta = rng.uniform_vector(4, -1, 1);

        double entity = 0.0;
        for (const auto& [r, pr] : scores) {
            if (std::find(related.begin(), related.end(), r) == related.end()) continue;
            for (const auto& [i, pi] : scores)
                if (std::find(related.begin(), related.end(), i) == related.end())
                    entity += std::max(0.0, gamma - (pr - pi));
        }
        double word = 0.0;
        for (WordId l = 0; l < V; ++l) {
            const bool candidate = candidates.empty() || std::find(candidates.begin(), candidates.end(), l) != candidates.end();
            if (l != answer && candidate) word += std::max(0.0, gamma - (d[answer] - d[l]));
        }
        double reg = 0.0;
        for (double v : theta.values()) reg += v * v;
        reg *= lambda;

        const double full = eval_scalar([&](Tape& t) {
            return loss_full(t, related, constant_scores(t, scores), t.constant(Tensor::from(d)), answer, candidates,
                             gamma, lambda, {t.constant(theta)});
        });
        const double weak = eval_scalar([&](Tape& t) {
            return loss_weak(t, t.constant(Tensor::from(d)), answer, candidates, gamma, lambda, {t.constant(theta)});
        });
        CHECK(full == doctest::Approx(entity + word + reg).epsilon(1e-12));
        CHECK(weak == doctest::Approx(word + reg).epsilon(1e-12));
        CHECK(full - weak == doctest::Approx(entity).epsilon(1e-9));
        CHECK(weak >= 0.0);
        CHECK(weak <= full);
    }
}

TEST_CASE("end-to-end loss gradient check") {
    const auto checks = run_gradchecks(1);
    REQUIRE(checks.size() == 4);
    CHECK(checks[3].name == "loss_full");
    CHECK(checks[3].result.max_rel_error < 1e-3);
}

namespace {

struct QaFixture {
    Model model;
    EmbeddingTable table;
    std::vector<QAExample> examples;
    Reader reader() const { return {&model.f1, &model.f2, &table, model.config}; }
};

QaFixture fixture(const std::string& babi, TrainConfig cfg) {
    const auto stories = parse_babi(babi, Lexicon::builtin());
    Rng rng(cfg.seed);
    QaFixture f{Model::create(cfg, build_vocabulary(stories), rng), EmbeddingTable(), {}};
    f.table = entity_table(f.model);
    f.examples = prepare(stories, f.model.vocab).examples;
    return f;
}

constexpr const char* kStory =
    "1 Mary moved to the bathroom .\n"
    "2 John went to the hallway .\n"
    "3 Where is Mary ?\tbathroom\t1\n";

}  // namespace

TEST_CASE("train_qa memorises one example and is deterministic") {
    TrainConfig cfg;
    cfg.d_ent = cfg.d_sent = 8;
    cfg.qa_epochs = 500;
    cfg.qa_lr = 0.1;
    const QaFixture f = fixture(kStory, cfg);
    REQUIRE(f.examples.size() == 1);
    Rng r1(3), r2(3);
    const QATrainResult a = train_qa(f.examples, f.reader(), f.model.qa, r1);
    CHECK(a.epoch_loss.size() == 500);
    CHECK(*std::min_element(a.epoch_loss.begin(), a.epoch_loss.end()) < cfg.gamma / 10);
    CHECK(evaluate(f.examples, a.model, f.reader()).accuracy == 1.0);

    TrainConfig two = cfg;
    two.qa_epochs = 2;
    const QaFixture g = fixture(kStory, two);
    const QATrainResult b1 = train_qa(g.examples, g.reader(), g.model.qa, r2);
    Rng r3(3);
    const QATrainResult b2 = train_qa(g.examples, g.reader(), g.model.qa, r3);
    CHECK(b1.epoch_loss == b2.epoch_loss);
    QAModel m1 = b1.model, m2 = b2.model;
    ParamView v1, v2;
    m1.collect(v1);
    m2.collect(v2);
    CHECK(v1.snapshot() == v2.snapshot());
    CHECK_THROWS_AS(train_qa({}, g.reader(), g.model.qa, r3), Error);
}

TEST_CASE("evaluate counts") {
    std::vector<QAExample> data(10);
    for (std::size_t i = 0; i < data.size(); ++i) {
        data[i].answer = i % 2 == 0 ? 5 : 6;
        data[i].related = {"a", "b"};
    }
    const EvalMetrics oracle = evaluate(data, [](const QAExample& ex) { return Prediction{ex.answer, {"a", "b"}}; });
    CHECK(oracle.accuracy == 1.0);
    CHECK(oracle.related_hit_rate == 1.0);
    CHECK(oracle.mean_hops == 2.0);
    const EvalMetrics constant = evaluate(data, [](const QAExample&) { return Prediction{5, {"a"}}; });
    CHECK(constant.accuracy == 0.5);
    CHECK(constant.related_hit_rate == 0.5);

    const std::vector<WordId> guesses{5, 5, 6, 6, 5, 6, 5, 5, 6, 6};
    std::size_t i = 0;
    const EvalMetrics hand = evaluate(data, [&](const QAExample&) { return Prediction{guesses[i++], {}}; });
    // gold:   5 6 5 6 5 6 5 6 5 6
    // guess:  5 5 6 6 5 6 5 5 6 6  -> hits at 0, 3, 4, 5, 6, 9
    CHECK(hand.correct == 6);
    CHECK(hand.accuracy == 0.6);
    CHECK(hand.predictions == guesses);
}
