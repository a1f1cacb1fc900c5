#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "emn/cells.hpp"
#include "emn/config.hpp"
#include "emn/embeddings.hpp"
#include "emn/params.hpp"
#include "emn/tape.hpp"

namespace emn {

/// State vector of one entity word.
struct EntitySlot {
    std::string token;
    Tensor state;
    std::size_t created_at = 0;
};

/// Entity states of one story, one slot per distinct token, in creation order.
class MemoryPool {
public:
    explicit MemoryPool(std::string story_id = {}) : story_id_(std::move(story_id)) {}

    const std::string& story_id() const { return story_id_; }
    std::size_t size() const { return slots_.size(); }
    bool empty() const { return slots_.empty(); }
    bool contains(std::string_view token) const { return index_.contains(std::string(token)); }

    EntitySlot* find(std::string_view token);
    const EntitySlot* find(std::string_view token) const;
    EntitySlot& at(std::string_view token);
    const EntitySlot& at(std::string_view token) const;
    const EntitySlot& slot(std::size_t i) const { return slots_[i]; }
    auto begin() const { return slots_.begin(); }
    auto end() const { return slots_.end(); }

    /// Appends a new slot; the token must be absent.
    EntitySlot& insert(EntitySlot slot);
    /// Drops every slot and rebinds the pool to another story.
    void reset(std::string story_id);

private:
    std::string story_id_;
    std::vector<EntitySlot> slots_;
    std::unordered_map<std::string, std::size_t> index_;
};

/// Generalization network: a GRU chain whose input is an entity state and
/// whose hidden state is the running sentence reconstruction.
struct F2Params {
    GruParams gru;   // input d_ent, hidden d_sent
    Tensor initial;  // learned chain start S^0, d_sent

    static F2Params random(std::size_t d_ent, std::size_t d_sent, Rng& rng);
    void collect(ParamView& view, std::string_view prefix);
};

struct F2Vars {
    GruVars gru;
    Var initial;
    static F2Vars bind(Tape& tape, const F2Params& p);
    static F2Vars freeze(Tape& tape, const F2Params& p);
};

/// Deterministic fallback for a token without a pretrained vector: uniform
/// in (-0.08, 0.08), seeded by the token text and `seed`.
Tensor fallback_embedding(std::string_view token, std::size_t dim, std::uint64_t seed);

/// Returns the slot for `token`, creating it from the embedding table (or
/// the seeded fallback) when absent. An existing slot is left untouched.
EntitySlot& init_slot(MemoryPool& pool, std::string_view token, const EmbeddingTable& table, std::size_t dim,
                      std::uint64_t seed, std::size_t statement_index = 0);

/// S^k = tanh(GRU(S^{k-1}, e_k)) over the states in order; returns S^j.
Var reconstruct(Tape& tape, const F2Vars& p, const std::vector<Var>& states);
Tensor reconstruct(const F2Params& p, const std::vector<const Tensor*>& states);

/// ||reconstruct - target||^2 for the named slots of `pool`.
double reconstruction_loss(const F2Params& p, const MemoryPool& pool, const std::vector<std::string>& entities,
                           const Tensor& target);

/// `steps` gradient steps on ||S' - S||^2 with respect to the listed slots'
/// states only (f2 frozen). Returns the loss seen before each step.
/// Throws Error if an entity has no slot or the list is empty.
std::vector<double> generalize(MemoryPool& pool, const std::vector<std::string>& entities, const Tensor& target,
                               const F2Params& p, std::size_t steps, double lr);

/// A statement mapped to word ids, with its entity tokens.
struct EncodedStatement {
    std::vector<WordId> ids;
    std::vector<std::string> entities;
};

/// Memoising wrapper around encode for a frozen autoencoder.
/// Not thread-safe; give each thread its own encoder.
class SentenceEncoder {
public:
    explicit SentenceEncoder(const LstmParams& params) : params_(&params) {}
    const Tensor& operator()(const std::vector<WordId>& ids);
    const LstmParams& params() const { return *params_; }

private:
    const LstmParams* params_;
    std::map<std::vector<WordId>, Tensor> cache_;
};

/// Everything reading needs besides the pool.
struct ReaderContext {
    SentenceEncoder* encoder = nullptr;
    const F2Params* f2 = nullptr;
    const EmbeddingTable* table = nullptr;
    std::size_t mem_steps = 5;
    double mem_lr = 0.05;
    std::size_t d_ent = 50;
    std::uint64_t seed = 1;
};

struct ReadStats {
    std::size_t statements = 0;
    std::size_t skipped = 0;
};

/// Feeds statements in order: encode, create missing slots, generalize.
/// Statements without entities are skipped and counted.
ReadStats read_story(MemoryPool& pool, const std::vector<EncodedStatement>& statements, const ReaderContext& ctx);

/// A story prepared for training the generalization network.
struct F2Story {
    std::string id;
    std::vector<EncodedStatement> statements;
};

struct F2TrainResult {
    F2Params params;
    std::vector<double> epoch_loss;
    /// Final-epoch loss of each entity-bearing sentence, in corpus order.
    std::vector<double> sentence_loss;
    double final_loss = 0.0;
};

struct F2TrainOptions {
    /// Entity tokens whose states are never updated during training.
    std::set<std::string> frozen_entities;
};

/// Alternating optimisation: for every entity-bearing sentence, `mem_steps`
/// joint steps on f2 (rate f2_lr) and the sentence's entity states (rate
/// mem_lr) against ||S' - S||^2; pools reset per story. The per-sentence
/// loss recorded is the one seen at the final inner step.
F2TrainResult train_f2(const std::vector<F2Story>& stories, const LstmParams& f1, F2Params init,
                       const EmbeddingTable& table, const TrainConfig& cfg, const EpochCallback& on_epoch = {},
                       const F2TrainOptions& options = {});

/// Mean reconstruction loss after reading each entity-bearing sentence with
/// f2 frozen (the read-time objective).
double f2_corpus_loss(const std::vector<F2Story>& stories, const LstmParams& f1, const F2Params& f2,
                      const EmbeddingTable& table, const TrainConfig& cfg);

}  // namespace emn
