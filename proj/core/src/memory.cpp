#include "emn/memory.hpp"

#include <string>

namespace emn {

EntitySlot* MemoryPool::find(std::string_view token) {
    auto it = index_.find(std::string(token));
    return it == index_.end() ? nullptr : &slots_[it->second];
}

const EntitySlot* MemoryPool::find(std::string_view token) const {
    auto it = index_.find(std::string(token));
    return it == index_.end() ? nullptr : &slots_[it->second];
}

EntitySlot& MemoryPool::at(std::string_view token) {
    EntitySlot* s = find(token);
    if (!s) throw Error("no memory slot for entity '" + std::string(token) + "'");
    return *s;
}

const EntitySlot& MemoryPool::at(std::string_view token) const {
    const EntitySlot* s = find(token);
    if (!s) throw Error("no memory slot for entity '" + std::string(token) + "'");
    return *s;
}

EntitySlot& MemoryPool::insert(EntitySlot slot) {
    if (slot.token.empty()) throw Error("entity token must be nonempty");
    if (contains(slot.token)) throw Error("entity '" + slot.token + "' already has a slot");
    index_.emplace(slot.token, slots_.size());
    slots_.push_back(std::move(slot));
    return slots_.back();
}

void MemoryPool::reset(std::string story_id) {
    story_id_ = std::move(story_id);
    slots_.clear();
    index_.clear();
}

F2Params F2Params::random(std::size_t d_ent, std::size_t d_sent, Rng& rng) {
    return {GruParams::random(d_ent, d_sent, rng), rng.uniform_vector(d_sent, -kInitScale, kInitScale)};
}

void F2Params::collect(ParamView& view, std::string_view prefix) {
    gru.collect(view, std::string(prefix) + "gru.");
    view.add(std::string(prefix) + "initial", initial);
}

F2Vars F2Vars::bind(Tape& t, const F2Params& p) { return {GruVars::bind(t, p.gru), t.param(p.initial)}; }

F2Vars F2Vars::freeze(Tape& t, const F2Params& p) { return {GruVars::freeze(t, p.gru), t.constant(p.initial)}; }

Tensor fallback_embedding(std::string_view token, std::size_t dim, std::uint64_t seed) {
    Rng rng(fnv1a(token) ^ (seed * 0x9e3779b97f4a7c15ULL));
    return rng.uniform_vector(dim, -kInitScale, kInitScale);
}

EntitySlot& init_slot(MemoryPool& pool, std::string_view token, const EmbeddingTable& table, std::size_t dim,
                      std::uint64_t seed, std::size_t statement_index) {
    if (EntitySlot* existing = pool.find(token)) return *existing;
    Tensor state;
    if (const Tensor* row = table.find(token)) {
        if (row->size() != dim)
            throw DimensionError("embedding for '" + std::string(token) + "' has " + std::to_string(row->size()) +
                                 " values, entity dimension is " + std::to_string(dim));
        state = *row;
    } else {
        state = fallback_embedding(token, dim, seed);
    }
    return pool.insert({std::string(token), std::move(state), statement_index});
}

Var reconstruct(Tape& t, const F2Vars& p, const std::vector<Var>& states) {
    if (states.empty()) throw Error("reconstruct needs at least one entity");
    Var s = p.initial;
    for (Var e : states) s = t.tanh(gru_step(t, p.gru, s, e));
    return s;
}

Tensor reconstruct(const F2Params& p, const std::vector<const Tensor*>& states) {
    Tape t;
    F2Vars v = F2Vars::freeze(t, p);
    std::vector<Var> vars;
    for (const Tensor* e : states) vars.push_back(t.constant(*e));
    return t.value(reconstruct(t, v, vars));
}

double reconstruction_loss(const F2Params& p, const MemoryPool& pool, const std::vector<std::string>& entities,
                           const Tensor& target) {
    std::vector<const Tensor*> states;
    for (const auto& e : entities) states.push_back(&pool.at(e).state);
    return squared_distance(reconstruct(p, states), target);
}

std::vector<double> generalize(MemoryPool& pool, const std::vector<std::string>& entities, const Tensor& target,
                               const F2Params& p, std::size_t steps, double lr) {
    if (entities.empty()) throw Error("generalize needs at least one entity");
    std::vector<EntitySlot*> slots;
    for (const auto& e : entities) slots.push_back(&pool.at(e));

    std::vector<double> losses;
    for (std::size_t step = 0; step < steps; ++step) {
        Tape t;
        F2Vars f2 = F2Vars::freeze(t, p);
        std::vector<Var> states;
        for (EntitySlot* s : slots) states.push_back(t.param(s->state));
        Var loss = t.sqnorm(t.sub(reconstruct(t, f2, states), t.constant(target)));
        losses.push_back(t.scalar(loss));
        t.backward(loss);
        for (EntitySlot* s : slots) {
            const Tensor g = t.gradient_of(s->state);
            for (std::size_t i = 0; i < g.size(); ++i) s->state[i] -= lr * g[i];
        }
    }
    return losses;
}

const Tensor& SentenceEncoder::operator()(const std::vector<WordId>& ids) {
    auto it = cache_.find(ids);
    if (it != cache_.end()) return it->second;
    return cache_.emplace(ids, encode(*params_, ids).value).first->second;
}

ReadStats read_story(MemoryPool& pool, const std::vector<EncodedStatement>& statements, const ReaderContext& ctx) {
    ReadStats stats;
    for (std::size_t i = 0; i < statements.size(); ++i) {
        const EncodedStatement& st = statements[i];
        ++stats.statements;
        if (st.entities.empty()) {
            ++stats.skipped;
            continue;
        }
        const Tensor& target = (*ctx.encoder)(st.ids);
        for (const auto& e : st.entities) init_slot(pool, e, *ctx.table, ctx.d_ent, ctx.seed, i);
        generalize(pool, st.entities, target, *ctx.f2, ctx.mem_steps, ctx.mem_lr);
    }
    return stats;
}

F2TrainResult train_f2(const std::vector<F2Story>& stories, const LstmParams& f1, F2Params init,
                       const EmbeddingTable& table, const TrainConfig& cfg, const EpochCallback& on_epoch,
                       const F2TrainOptions& options) {
    std::size_t bearing = 0;
    for (const auto& s : stories)
        for (const auto& st : s.statements)
            if (!st.entities.empty()) ++bearing;
    if (bearing == 0) throw Error("generalization training needs at least one sentence with entities");

    F2TrainResult result;
    result.params = std::move(init);
    ParamView view;
    result.params.collect(view, "");
    SentenceEncoder encoder(f1);

    for (std::size_t epoch = 0; epoch < cfg.f2_epochs; ++epoch) {
        double sum = 0.0;
        result.sentence_loss.clear();
        for (const F2Story& story : stories) {
            MemoryPool pool(story.id);
            for (std::size_t i = 0; i < story.statements.size(); ++i) {
                const EncodedStatement& st = story.statements[i];
                if (st.entities.empty()) continue;
                const Tensor& target = encoder(st.ids);
                for (const auto& e : st.entities) init_slot(pool, e, table, cfg.d_ent, cfg.seed, i);
                std::vector<EntitySlot*> slots;
                for (const auto& e : st.entities) slots.push_back(&pool.at(e));

                double last = 0.0;
                for (std::size_t step = 0; step < cfg.mem_steps; ++step) {
                    Tape t;
                    F2Vars f2 = F2Vars::bind(t, result.params);
                    std::vector<Var> states;
                    for (EntitySlot* s : slots) states.push_back(t.param(s->state));
                    Var loss = t.sqnorm(t.sub(reconstruct(t, f2, states), t.constant(target)));
                    last = t.scalar(loss);
                    const ParamSet grads = backward(t, loss, view);
                    for (EntitySlot* s : slots) {
                        if (options.frozen_entities.contains(s->token)) continue;
                        const Tensor g = t.gradient_of(s->state);
                        for (std::size_t k = 0; k < g.size(); ++k) s->state[k] -= cfg.mem_lr * g[k];
                    }
                    sgd_step(view, grads, cfg.f2_lr);
                }
                result.sentence_loss.push_back(last);
                sum += last;
            }
        }
        const double mean = sum / static_cast<double>(bearing);
        result.epoch_loss.push_back(mean);
        if (on_epoch) on_epoch(epoch, mean, 0.0);
    }
    result.final_loss = result.epoch_loss.empty() ? 0.0 : result.epoch_loss.back();
    return result;
}

double f2_corpus_loss(const std::vector<F2Story>& stories, const LstmParams& f1, const F2Params& f2,
                      const EmbeddingTable& table, const TrainConfig& cfg) {
    SentenceEncoder encoder(f1);
    double sum = 0.0;
    std::size_t n = 0;
    for (const F2Story& story : stories) {
        MemoryPool pool(story.id);
        for (std::size_t i = 0; i < story.statements.size(); ++i) {
            const EncodedStatement& st = story.statements[i];
            if (st.entities.empty()) continue;
            const Tensor& target = encoder(st.ids);
            for (const auto& e : st.entities) init_slot(pool, e, table, cfg.d_ent, cfg.seed, i);
            generalize(pool, st.entities, target, f2, cfg.mem_steps, cfg.mem_lr);
            sum += reconstruction_loss(f2, pool, st.entities, target);
            ++n;
        }
    }
    return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

}  // namespace emn
