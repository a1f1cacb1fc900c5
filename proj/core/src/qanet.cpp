#include "emn/qanet.hpp"

#include <algorithm>
#include <cmath>

namespace emn {

RetrievalParams RetrievalParams::random(std::size_t d_ent, std::size_t d_sent, Rng& rng) {
    RetrievalParams p;
    p.q_gru = GruParams::random(d_ent, d_sent, rng);
    p.o_gru = GruParams::random(d_ent, d_sent, rng);
    p.score_gru = GruParams::random(d_ent, d_sent, rng);
    p.score_w = rng.uniform_matrix(1, d_sent, -kInitScale, kInitScale);
    p.score_b = Tensor::zeros(1);
    return p;
}

RetrievalParams RetrievalParams::zeros(std::size_t d_ent, std::size_t d_sent) {
    return {GruParams::zeros(d_ent, d_sent), GruParams::zeros(d_ent, d_sent), GruParams::zeros(d_ent, d_sent),
            Tensor::zeros(1, d_sent), Tensor::zeros(1)};
}

void RetrievalParams::collect(ParamView& view, std::string_view prefix) {
    const std::string p(prefix);
    q_gru.collect(view, p + "q_gru.");
    o_gru.collect(view, p + "o_gru.");
    score_gru.collect(view, p + "score_gru.");
    view.add(p + "score_w", score_w);
    view.add(p + "score_b", score_b);
}

RetrievalVars RetrievalVars::bind(Tape& t, const RetrievalParams& p) {
    return {GruVars::bind(t, p.q_gru), GruVars::bind(t, p.o_gru), GruVars::bind(t, p.score_gru),
            t.param(p.score_w), t.param(p.score_b)};
}

RetrievalVars RetrievalVars::freeze(Tape& t, const RetrievalParams& p) {
    return {GruVars::freeze(t, p.q_gru), GruVars::freeze(t, p.o_gru), GruVars::freeze(t, p.score_gru),
            t.constant(p.score_w), t.constant(p.score_b)};
}

namespace {

void append_gru(std::vector<Var>& out, const GruVars& g) {
    out.insert(out.end(), {g.w_z, g.u_z, g.w_r, g.u_r, g.w_h, g.u_h, g.b_z, g.b_r, g.b_h});
}

Var zero_scalar(Tape& t) { return t.constant(Tensor::scalar(0.0)); }

Var accumulate(Tape& t, Var total, Var term) { return total.valid() ? t.add(total, term) : term; }

}  // namespace

std::vector<Var> RetrievalVars::all() const {
    std::vector<Var> out;
    append_gru(out, q_gru);
    append_gru(out, o_gru);
    append_gru(out, score_gru);
    out.push_back(score_w);
    out.push_back(score_b);
    return out;
}

ResponseParams ResponseParams::random(std::size_t vocab_size, std::size_t d_sent, std::size_t d_emb, Rng& rng) {
    return {rng.uniform_matrix(vocab_size, d_sent, -kInitScale, kInitScale), Tensor::zeros(vocab_size),
            GruParams::random(d_emb, d_sent, rng)};
}

ResponseParams ResponseParams::zeros(std::size_t vocab_size, std::size_t d_sent, std::size_t d_emb) {
    return {Tensor::zeros(vocab_size, d_sent), Tensor::zeros(vocab_size), GruParams::zeros(d_emb, d_sent)};
}

void ResponseParams::collect(ParamView& view, std::string_view prefix) {
    const std::string p(prefix);
    view.add(p + "out_w", out_w);
    view.add(p + "out_b", out_b);
    seq_gru.collect(view, p + "seq_gru.");
}

ResponseVars ResponseVars::bind(Tape& t, const ResponseParams& p) {
    return {t.param(p.out_w), t.param(p.out_b), GruVars::bind(t, p.seq_gru)};
}

ResponseVars ResponseVars::freeze(Tape& t, const ResponseParams& p) {
    return {t.constant(p.out_w), t.constant(p.out_b), GruVars::freeze(t, p.seq_gru)};
}

std::vector<Var> ResponseVars::all() const {
    std::vector<Var> out{out_w, out_b};
    append_gru(out, seq_gru);
    return out;
}

Var score_entity(Tape& t, const RetrievalVars& p, Var entity, Var query) {
    Var composed = gru_step(t, p.score_gru, query, entity);
    return t.sigmoid(t.affine(p.score_w, composed, p.score_b));
}

double score_entity(const RetrievalParams& p, const Tensor& entity, const Tensor& query) {
    Tape t;
    RetrievalVars v = RetrievalVars::freeze(t, p);
    return t.scalar(score_entity(t, v, t.constant(entity), t.constant(query)));
}

bool RetrievalTrace::selected(std::string_view token) const {
    return std::any_of(hops.begin(), hops.end(), [&](const HopRecord& h) { return h.token == token; });
}

FeatureResult output_feature(Tape& t, const RetrievalVars& p, const MemoryPool& pool, Var query,
                             std::size_t max_hops, double eps) {
    if (max_hops < 1) throw Error("output_feature: max_hops must be at least 1");
    if (!(eps > 0.0)) throw Error("output_feature: eps must be positive");
    if (pool.empty()) throw EmptyPoolError();

    const std::size_t n = pool.size();
    std::vector<Var> entities;
    entities.reserve(n);
    for (const EntitySlot& slot : pool) entities.push_back(t.constant(slot.state));

    std::vector<Var> first_hop(n);
    std::vector<Var> at_selection(n);
    std::vector<bool> chosen(n, false);

    FeatureResult result;
    Var out = query;
    Var q = query;
    const std::size_t hops = std::min(max_hops, n);
    for (std::size_t j = 0; j < hops; ++j) {
        std::size_t best = n;
        for (std::size_t k = 0; k < n; ++k) {
            if (chosen[k]) continue;
            Var s = score_entity(t, p, entities[k], q);
            if (j == 0) first_hop[k] = s;
            if (best == n || t.scalar(s) > t.scalar(at_selection[best])) best = k;
            at_selection[k] = s;
        }
        chosen[best] = true;
        Var score = at_selection[best];

        Var next = t.tanh(gru_step(t, p.o_gru, out, t.scale(entities[best], score)));
        const Tensor& prev_value = t.value(out);
        const double change = std::sqrt(squared_distance(t.value(next), prev_value)) /
                              std::max(l2_norm(prev_value), 1e-8);
        result.trace.hops.push_back({pool.slot(best).token, t.scalar(score), change});
        out = next;
        if (change < eps) break;
        if (j + 1 < hops) q = t.tanh(gru_step(t, p.q_gru, q, entities[best]));
    }

    result.output = out;
    result.trace.output = t.value(out);
    result.entity_scores.reserve(n);
    for (std::size_t k = 0; k < n; ++k)
        result.entity_scores.emplace_back(pool.slot(k).token, chosen[k] ? at_selection[k] : first_hop[k]);
    return result;
}

RetrievalTrace output_feature(const MemoryPool& pool, const Tensor& query, const RetrievalParams& p,
                              std::size_t max_hops, double eps) {
    Tape t;
    RetrievalVars v = RetrievalVars::freeze(t, p);
    return output_feature(t, v, pool, t.constant(query), max_hops, eps).trace;
}

Var answer_word(Tape& t, const ResponseVars& p, Var output) {
    return t.softmax(t.tanh(t.affine(p.out_w, output, p.out_b)));
}

Tensor answer_word(const ResponseParams& p, const Tensor& output) {
    Tape t;
    ResponseVars v = ResponseVars::freeze(t, p);
    return t.value(answer_word(t, v, t.constant(output)));
}

std::vector<WordId> answer_sequence(const ResponseParams& p, const Tensor& embedding, const Tensor& output,
                                    std::size_t max_len) {
    if (max_len < 1) throw Error("answer_sequence: max_len must be at least 1");
    Tape t;
    ResponseVars v = ResponseVars::freeze(t, p);
    Var o = t.constant(output);
    std::vector<WordId> words;
    while (words.size() < max_len) {
        const WordId w = argmax(t.value(answer_word(t, v, o)));
        if (w == kEosId) break;
        words.push_back(w);
        if (words.size() < max_len) o = t.tanh(gru_step(t, v.seq_gru, o, t.constant(embedding.row(w))));
    }
    return words;
}

Var entity_margin_term(Tape& t, const EntityScores& scores, const std::vector<std::string>& related,
                       double gamma) {
    auto is_related = [&](const std::string& token) {
        return std::find(related.begin(), related.end(), token) != related.end();
    };
    Var total;
    for (const auto& [r_token, p_r] : scores) {
        if (!is_related(r_token)) continue;
        for (const auto& [i_token, p_i] : scores) {
            if (is_related(i_token)) continue;
            total = accumulate(t, total, t.hinge(gamma, p_r, p_i));
        }
    }
    return total.valid() ? total : zero_scalar(t);
}

Var word_margin_term(Tape& t, Var distribution, WordId answer, const std::vector<WordId>& candidates,
                     double gamma) {
    const std::size_t vocab = t.value(distribution).size();
    if (answer >= vocab) throw DimensionError("answer id " + std::to_string(answer) + " outside distribution");
    Var p_answer = t.pick(distribution, answer);
    Var total;
    auto add_pair = [&](WordId l) {
        if (l == answer) return;
        total = accumulate(t, total, t.hinge(gamma, p_answer, t.pick(distribution, l)));
    };
    if (candidates.empty()) {
        for (WordId l = 0; l < vocab; ++l) add_pair(l);
    } else {
        for (WordId l : candidates) add_pair(l);
    }
    return total.valid() ? total : zero_scalar(t);
}

Var regularizer(Tape& t, const std::vector<Var>& theta, double lambda) {
    Var total;
    for (Var v : theta) total = accumulate(t, total, t.sqnorm(v));
    if (!total.valid()) return zero_scalar(t);
    return t.scale(total, t.constant(Tensor::scalar(lambda)));
}

Var loss_full(Tape& t, const std::vector<std::string>& related, const EntityScores& scores, Var distribution,
              WordId answer, const std::vector<WordId>& candidates, double gamma, double lambda,
              const std::vector<Var>& theta) {
    if (related.empty()) throw Error("loss_full needs related entities; use loss_weak");
    if (!(gamma > 0.0)) throw Error("margin must be positive");
    Var entity = entity_margin_term(t, scores, related, gamma);
    Var word = word_margin_term(t, distribution, answer, candidates, gamma);
    return t.add(t.add(entity, word), regularizer(t, theta, lambda));
}

Var loss_weak(Tape& t, Var distribution, WordId answer, const std::vector<WordId>& candidates, double gamma,
              double lambda, const std::vector<Var>& theta) {
    if (!(gamma > 0.0)) throw Error("margin must be positive");
    return t.add(word_margin_term(t, distribution, answer, candidates, gamma), regularizer(t, theta, lambda));
}

QAModel QAModel::random(std::size_t vocab_size, std::size_t d_ent, std::size_t d_sent, std::size_t d_emb, Rng& rng) {
    QAModel m;
    m.retrieval = RetrievalParams::random(d_ent, d_sent, rng);
    m.response = ResponseParams::random(vocab_size, d_sent, d_emb, rng);
    return m;
}

void QAModel::collect(ParamView& view) {
    retrieval.collect(view, "retrieval.");
    response.collect(view, "response.");
}

std::vector<ReadExample> read_examples(const std::vector<QAExample>& dataset, const Reader& reader) {
    SentenceEncoder encoder(*reader.f1);
    ReaderContext ctx{&encoder, reader.f2, reader.table, reader.cfg.mem_steps, reader.cfg.mem_lr, reader.cfg.d_ent,
                      reader.cfg.seed};
    std::vector<ReadExample> out;
    out.reserve(dataset.size());
    for (const QAExample& ex : dataset) {
        ReadExample r{MemoryPool(ex.story_id), encoder(ex.question)};
        read_story(r.pool, ex.statements, ctx);
        out.push_back(std::move(r));
    }
    return out;
}

QATrainResult train_qa(const std::vector<QAExample>& dataset, const Reader& reader, QAModel init, Rng& rng,
                       const EpochCallback& on_epoch) {
    if (dataset.empty()) throw Error("QA training needs a nonempty dataset");
    const TrainConfig& cfg = reader.cfg;
    const std::vector<ReadExample> reads = read_examples(dataset, reader);

    QATrainResult result;
    result.model = std::move(init);
    ParamView view;
    result.model.collect(view);

    std::vector<std::size_t> order(dataset.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (std::size_t epoch = 0; epoch < cfg.qa_epochs; ++epoch) {
        rng.shuffle(order);
        double loss_sum = 0.0;
        std::size_t used = 0;
        std::size_t correct = 0;
        for (std::size_t idx : order) {
            const QAExample& ex = dataset[idx];
            const ReadExample& read = reads[idx];
            if (read.pool.empty()) continue;

            Tape t;
            RetrievalVars rv = RetrievalVars::bind(t, result.model.retrieval);
            ResponseVars sv = ResponseVars::bind(t, result.model.response);
            std::vector<Var> theta = rv.all();
            for (Var v : sv.all()) theta.push_back(v);

            FeatureResult feature = output_feature(t, rv, read.pool, t.constant(read.query), cfg.max_hops, cfg.eps);
            Var dist = answer_word(t, sv, feature.output);
            if (argmax(t.value(dist)) == ex.answer) ++correct;

            Var loss = cfg.full_supervision && !ex.related.empty()
                           ? loss_full(t, ex.related, feature.entity_scores, dist, ex.answer, ex.candidates,
                                       cfg.gamma, cfg.lambda, theta)
                           : loss_weak(t, dist, ex.answer, ex.candidates, cfg.gamma, cfg.lambda, theta);
            loss_sum += t.scalar(loss);
            ++used;
            sgd_step(view, backward(t, loss, view), cfg.qa_lr);
        }
        const double mean = used ? loss_sum / static_cast<double>(used) : 0.0;
        const double accuracy = used ? static_cast<double>(correct) / static_cast<double>(used) : 0.0;
        result.epoch_loss.push_back(mean);
        result.epoch_accuracy.push_back(accuracy);
        if (on_epoch) on_epoch(epoch, mean, accuracy);
    }
    return result;
}

EvalMetrics evaluate(const std::vector<QAExample>& dataset, const Predictor& predict) {
    EvalMetrics m;
    std::size_t hops = 0;
    std::size_t hits = 0;
    for (const QAExample& ex : dataset) {
        const Prediction p = predict(ex);
        ++m.n;
        if (p.answer == ex.answer) ++m.correct;
        m.predictions.push_back(p.answer);
        hops += p.retrieved.size();
        for (const auto& r : ex.related) {
            ++m.related_total;
            if (std::find(p.retrieved.begin(), p.retrieved.end(), r) != p.retrieved.end()) ++hits;
        }
    }
    if (m.n > 0) {
        m.accuracy = static_cast<double>(m.correct) / static_cast<double>(m.n);
        m.mean_hops = static_cast<double>(hops) / static_cast<double>(m.n);
    }
    if (m.related_total > 0) m.related_hit_rate = static_cast<double>(hits) / static_cast<double>(m.related_total);
    return m;
}

Prediction predict(const QAModel& model, const ReadExample& read, const TrainConfig& cfg) {
    Prediction p;
    if (read.pool.empty()) return p;
    Tape t;
    RetrievalVars rv = RetrievalVars::freeze(t, model.retrieval);
    ResponseVars sv = ResponseVars::freeze(t, model.response);
    FeatureResult feature = output_feature(t, rv, read.pool, t.constant(read.query), cfg.max_hops, cfg.eps);
    p.answer = argmax(t.value(answer_word(t, sv, feature.output)));
    for (const HopRecord& h : feature.trace.hops) p.retrieved.push_back(h.token);
    return p;
}

EvalMetrics evaluate(const std::vector<QAExample>& dataset, const QAModel& model, const Reader& reader) {
    const std::vector<ReadExample> reads = read_examples(dataset, reader);
    return evaluate(dataset, [&](const QAExample& ex) {
        const std::size_t idx = static_cast<std::size_t>(&ex - dataset.data());
        return predict(model, reads[idx], reader.cfg);
    });
}

}  // namespace emn
