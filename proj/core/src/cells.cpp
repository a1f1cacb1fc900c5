#include "emn/cells.hpp"

#include <algorithm>
#include <string>
#include <utility>

namespace emn {

namespace {

Tensor small_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
    return rng.uniform_matrix(rows, cols, -kInitScale, kInitScale);
}

Tensor glorot_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
    const double a = glorot_scale(rows, cols);
    return rng.uniform_matrix(rows, cols, -a, a);
}

std::string join(std::string_view prefix, const char* name) {
    std::string s(prefix);
    s += name;
    return s;
}

}  // namespace

GruParams GruParams::zeros(std::size_t input_dim, std::size_t hidden_dim) {
    GruParams p;
    p.w_z = p.w_r = p.w_h = Tensor::zeros(hidden_dim, input_dim);
    p.u_z = p.u_r = p.u_h = Tensor::zeros(hidden_dim, hidden_dim);
    p.b_z = p.b_r = p.b_h = Tensor::zeros(hidden_dim);
    return p;
}

GruParams GruParams::random(std::size_t input_dim, std::size_t hidden_dim, Rng& rng) {
    GruParams p = zeros(input_dim, hidden_dim);
    p.w_z = small_matrix(hidden_dim, input_dim, rng);
    p.u_z = small_matrix(hidden_dim, hidden_dim, rng);
    p.w_r = small_matrix(hidden_dim, input_dim, rng);
    p.u_r = small_matrix(hidden_dim, hidden_dim, rng);
    p.w_h = small_matrix(hidden_dim, input_dim, rng);
    p.u_h = small_matrix(hidden_dim, hidden_dim, rng);
    return p;
}

void GruParams::validate() const {
    const std::size_t in = input_dim();
    const std::size_t hid = hidden_dim();
    for (const Tensor* w : {&w_z, &w_r, &w_h})
        if (!w->is_matrix() || w->rows() != hid || w->cols() != in)
            throw DimensionError("GRU input weight has shape " + w->shape_string());
    for (const Tensor* u : {&u_z, &u_r, &u_h})
        if (!u->is_matrix() || u->rows() != hid || u->cols() != hid)
            throw DimensionError("GRU recurrent weight has shape " + u->shape_string());
    for (const Tensor* b : {&b_z, &b_r, &b_h})
        if (!b->is_vector() || b->rows() != hid) throw DimensionError("GRU bias has shape " + b->shape_string());
}

void GruParams::collect(ParamView& view, std::string_view prefix) {
    view.add(join(prefix, "W_z"), w_z);
    view.add(join(prefix, "U_z"), u_z);
    view.add(join(prefix, "W_r"), w_r);
    view.add(join(prefix, "U_r"), u_r);
    view.add(join(prefix, "W"), w_h);
    view.add(join(prefix, "U"), u_h);
    view.add(join(prefix, "b_z"), b_z);
    view.add(join(prefix, "b_r"), b_r);
    view.add(join(prefix, "b_h"), b_h);
}

GruVars GruVars::bind(Tape& t, const GruParams& p) {
    return {t.param(p.w_z), t.param(p.u_z), t.param(p.w_r), t.param(p.u_r), t.param(p.w_h),
            t.param(p.u_h), t.param(p.b_z), t.param(p.b_r), t.param(p.b_h)};
}

GruVars GruVars::freeze(Tape& t, const GruParams& p) {
    return {t.constant(p.w_z), t.constant(p.u_z), t.constant(p.w_r), t.constant(p.u_r), t.constant(p.w_h),
            t.constant(p.u_h), t.constant(p.b_z), t.constant(p.b_r), t.constant(p.b_h)};
}

Var gru_step(Tape& t, const GruVars& p, Var h_prev, Var x) {
    Var z = t.sigmoid(t.affine2(p.w_z, x, p.u_z, h_prev, p.b_z));
    Var r = t.sigmoid(t.affine2(p.w_r, x, p.u_r, h_prev, p.b_r));
    Var candidate = t.tanh(t.affine2(p.w_h, x, p.u_h, t.hadamard(r, h_prev), p.b_h));
    return t.add(t.hadamard(t.one_minus(z), h_prev), t.hadamard(z, candidate));
}

Tensor gru_step(const GruParams& p, const Tensor& h_prev, const Tensor& x) {
    Tape t;
    GruVars v = GruVars::freeze(t, p);
    return t.value(gru_step(t, v, t.constant(h_prev), t.constant(x)));
}

LstmCellParams LstmCellParams::zeros(std::size_t input_dim, std::size_t hidden_dim) {
    LstmCellParams p;
    p.w_i = p.w_f = p.w_o = p.w_c = Tensor::zeros(hidden_dim, input_dim);
    p.u_i = p.u_f = p.u_o = p.u_c = Tensor::zeros(hidden_dim, hidden_dim);
    p.b_i = p.b_f = p.b_o = p.b_c = Tensor::zeros(hidden_dim);
    return p;
}

LstmCellParams LstmCellParams::random(std::size_t input_dim, std::size_t hidden_dim, Rng& rng) {
    LstmCellParams p = zeros(input_dim, hidden_dim);
    for (Tensor* w : {&p.w_i, &p.w_f, &p.w_o, &p.w_c}) *w = glorot_matrix(hidden_dim, input_dim, rng);
    for (Tensor* u : {&p.u_i, &p.u_f, &p.u_o, &p.u_c}) *u = glorot_matrix(hidden_dim, hidden_dim, rng);
    p.b_f = Tensor::filled(hidden_dim, kForgetBias);
    return p;
}

void LstmCellParams::collect(ParamView& view, std::string_view prefix) {
    view.add(join(prefix, "W_i"), w_i);
    view.add(join(prefix, "U_i"), u_i);
    view.add(join(prefix, "b_i"), b_i);
    view.add(join(prefix, "W_f"), w_f);
    view.add(join(prefix, "U_f"), u_f);
    view.add(join(prefix, "b_f"), b_f);
    view.add(join(prefix, "W_o"), w_o);
    view.add(join(prefix, "U_o"), u_o);
    view.add(join(prefix, "b_o"), b_o);
    view.add(join(prefix, "W_c"), w_c);
    view.add(join(prefix, "U_c"), u_c);
    view.add(join(prefix, "b_c"), b_c);
}

LstmCellVars LstmCellVars::bind(Tape& t, const LstmCellParams& p) {
    return {t.param(p.w_i), t.param(p.u_i), t.param(p.b_i), t.param(p.w_f), t.param(p.u_f), t.param(p.b_f),
            t.param(p.w_o), t.param(p.u_o), t.param(p.b_o), t.param(p.w_c), t.param(p.u_c), t.param(p.b_c)};
}

LstmCellVars LstmCellVars::freeze(Tape& t, const LstmCellParams& p) {
    return {t.constant(p.w_i), t.constant(p.u_i), t.constant(p.b_i), t.constant(p.w_f),
            t.constant(p.u_f), t.constant(p.b_f), t.constant(p.w_o), t.constant(p.u_o),
            t.constant(p.b_o), t.constant(p.w_c), t.constant(p.u_c), t.constant(p.b_c)};
}

LstmStateVars lstm_step(Tape& t, const LstmCellVars& p, LstmStateVars s, Var x) {
    Var i = t.sigmoid(t.affine2(p.w_i, x, p.u_i, s.h, p.b_i));
    Var f = t.sigmoid(t.affine2(p.w_f, x, p.u_f, s.h, p.b_f));
    Var o = t.sigmoid(t.affine2(p.w_o, x, p.u_o, s.h, p.b_o));
    Var g = t.tanh(t.affine2(p.w_c, x, p.u_c, s.h, p.b_c));
    Var c = t.add(t.hadamard(f, s.c), t.hadamard(i, g));
    Var h = t.hadamard(o, t.tanh(c));
    return {h, c};
}

LstmState lstm_step(const LstmCellParams& p, const LstmState& state, const Tensor& x) {
    Tape t;
    LstmCellVars v = LstmCellVars::freeze(t, p);
    LstmStateVars out = lstm_step(t, v, {t.constant(state.h), t.constant(state.c)}, t.constant(x));
    return {t.value(out.h), t.value(out.c)};
}

LstmParams LstmParams::random(std::size_t vocab_size, std::size_t embed_dim, std::size_t hidden_dim, Rng& rng) {
    LstmParams p;
    p.embedding = rng.uniform_matrix(vocab_size, embed_dim, -kEmbeddingScale, kEmbeddingScale);
    p.encoder = LstmCellParams::random(embed_dim, hidden_dim, rng);
    p.decoder = LstmCellParams::random(embed_dim, hidden_dim, rng);
    p.bos = rng.uniform_vector(embed_dim, -kInitScale, kInitScale);
    p.context = small_matrix(embed_dim, hidden_dim, rng);
    p.out_w = glorot_matrix(vocab_size, hidden_dim, rng);
    p.out_b = Tensor::zeros(vocab_size);
    return p;
}

void LstmParams::collect(ParamView& view, std::string_view prefix) {
    view.add(join(prefix, "embedding"), embedding);
    encoder.collect(view, join(prefix, "encoder."));
    decoder.collect(view, join(prefix, "decoder."));
    view.add(join(prefix, "bos"), bos);
    view.add(join(prefix, "context"), context);
    view.add(join(prefix, "out_w"), out_w);
    view.add(join(prefix, "out_b"), out_b);
}

LstmVars LstmVars::bind(Tape& t, const LstmParams& p) {
    LstmVars v;
    v.embedding = t.param(p.embedding);
    v.encoder = LstmCellVars::bind(t, p.encoder);
    v.decoder = LstmCellVars::bind(t, p.decoder);
    v.bos = t.param(p.bos);
    v.context = t.param(p.context);
    v.out_w = t.param(p.out_w);
    v.out_b = t.param(p.out_b);
    return v;
}

namespace {

void check_tokens(const std::vector<WordId>& tokens, std::size_t vocab_size) {
    if (tokens.empty()) throw Error("cannot encode an empty sentence");
    for (WordId id : tokens)
        if (id >= vocab_size)
            throw Error("word id " + std::to_string(id) + " outside vocabulary of " + std::to_string(vocab_size) +
                        " (map unknown words to the unk id first)");
}

}  // namespace

Var encode(Tape& t, const LstmVars& p, const std::vector<WordId>& tokens) {
    const Tensor& emb = t.value(p.embedding);
    check_tokens(tokens, emb.rows());
    const std::size_t hid = t.value(p.encoder.u_i).rows();
    LstmStateVars s{t.constant(Tensor::zeros(hid)), t.constant(Tensor::zeros(hid))};
    for (WordId id : tokens) s = lstm_step(t, p.encoder, s, t.row(p.embedding, id));
    return s.h;
}

SentenceVec encode(const LstmParams& p, const std::vector<WordId>& tokens, std::size_t source) {
    check_tokens(tokens, p.vocab_size());
    Tape t;
    LstmCellVars enc = LstmCellVars::freeze(t, p.encoder);
    const std::size_t hid = p.hidden_dim();
    LstmStateVars s{t.constant(Tensor::zeros(hid)), t.constant(Tensor::zeros(hid))};
    for (WordId id : tokens) s = lstm_step(t, enc, s, t.constant(p.embedding.row(id)));
    return {t.value(s.h), source};
}

std::size_t argmax(const Tensor& v) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i)
        if (v[i] > v[best]) best = i;
    return best;
}

std::vector<WordId> decode(const LstmParams& p, const SentenceVec& s, std::size_t max_len) {
    if (s.value.size() != p.hidden_dim())
        throw DimensionError("decode: sentence vector " + s.value.shape_string() + " vs hidden dim " +
                             std::to_string(p.hidden_dim()));
    Tape t;
    LstmCellVars dec = LstmCellVars::freeze(t, p.decoder);
    Var out_w = t.constant(p.out_w);
    Var out_b = t.constant(p.out_b);
    LstmStateVars state{t.constant(s.value), t.constant(s.value)};
    Var cond = t.matvec(t.constant(p.context), state.h);
    Var x = t.constant(p.bos);
    std::vector<WordId> out;
    while (out.size() < max_len) {
        state = lstm_step(t, dec, state, t.add(x, cond));
        const Tensor probs = t.value(t.softmax(t.affine(out_w, state.h, out_b)));
        const WordId w = argmax(probs);
        if (w == kEosId) break;
        out.push_back(w);
        x = t.constant(p.embedding.row(w));
    }
    return out;
}

Var autoencoder_loss(Tape& t, const LstmVars& p, const std::vector<WordId>& tokens, std::size_t* correct) {
    Var h = encode(t, p, tokens);
    LstmStateVars state{h, h};
    Var cond = t.matvec(p.context, h);
    Var x = p.bos;
    Var total;
    const std::size_t steps = tokens.size() + 1;
    for (std::size_t k = 0; k < steps; ++k) {
        const WordId target = k < tokens.size() ? tokens[k] : kEosId;
        state = lstm_step(t, p.decoder, state, t.add(x, cond));
        Var logits = t.affine(p.out_w, state.h, p.out_b);
        if (correct && argmax(t.value(logits)) == target) ++*correct;
        Var nll = t.neg_log_softmax(logits, target);
        total = total.valid() ? t.add(total, nll) : nll;
        if (k < tokens.size()) x = t.row(p.embedding, target);
    }
    return t.scale(total, t.constant(Tensor::scalar(1.0 / static_cast<double>(steps))));
}

namespace {

// Mean teacher-forced loss and token accuracy of the corpus at fixed params.
std::pair<double, double> corpus_loss(const LstmParams& p, const std::vector<std::vector<WordId>>& corpus) {
    double loss_sum = 0.0;
    std::size_t hits = 0;
    std::size_t targets = 0;
    for (const auto& sentence : corpus) {
        Tape t;
        LstmVars vars = LstmVars::bind(t, p);
        loss_sum += t.scalar(autoencoder_loss(t, vars, sentence, &hits));
        targets += sentence.size() + 1;
    }
    return {loss_sum / static_cast<double>(corpus.size()), static_cast<double>(hits) / static_cast<double>(targets)};
}

}  // namespace

PretrainResult pretrain_autoencoder(const std::vector<std::vector<WordId>>& corpus, LstmParams init,
                                    const TrainConfig& cfg, Rng& rng, const EpochCallback& on_epoch) {
    if (corpus.empty()) throw Error("autoencoder pretraining needs a nonempty corpus");
    PretrainResult result;
    result.params = std::move(init);
    ParamView view;
    result.params.collect(view, "");

    std::vector<std::size_t> order(corpus.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    double lr = cfg.ae_lr;
    auto [accepted, accepted_accuracy] = corpus_loss(result.params, corpus);
    result.initial_loss = accepted;
    for (std::size_t epoch = 0; epoch < cfg.ae_epochs; ++epoch) {
        const ParamSet snapshot = view.snapshot();
        rng.shuffle(order);
        for (std::size_t idx : order) {
            Tape t;
            LstmVars vars = LstmVars::bind(t, result.params);
            Var loss = autoencoder_loss(t, vars, corpus[idx]);
            ParamSet grads = backward(t, loss, view);
            clip_global_norm(grads, cfg.ae_clip);
            sgd_step(view, grads, lr);
        }
        const auto [loss, accuracy] = corpus_loss(result.params, corpus);
        const bool improved = !(loss > accepted);
        if (improved) {
            accepted = loss;
            accepted_accuracy = accuracy;
            lr = cfg.ae_lr;
        } else {
            view.assign(snapshot);
            lr *= 0.5;
        }
        result.epoch_loss.push_back(accepted);
        result.epoch_accuracy.push_back(accepted_accuracy);
        result.epoch_lr.push_back(lr);
        if (on_epoch) on_epoch(epoch, accepted, accepted_accuracy);
        if (improved && accuracy >= cfg.ae_target_accuracy) break;
    }
    result.final_loss = accepted;
    return result;
}

double reconstruction_accuracy(const LstmParams& p, const std::vector<std::vector<WordId>>& corpus) {
    std::size_t hits = 0;
    std::size_t total = 0;
    for (const auto& sentence : corpus) {
        const std::vector<WordId> out = decode(p, encode(p, sentence), sentence.size() + 1);
        for (std::size_t k = 0; k < sentence.size(); ++k)
            if (k < out.size() && out[k] == sentence[k]) ++hits;
        total += sentence.size();
    }
    return total == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(total);
}

}  // namespace emn
