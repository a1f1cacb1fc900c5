#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "emn/cells.hpp"
#include "emn/config.hpp"
#include "emn/memory.hpp"
#include "emn/params.hpp"
#include "emn/rng.hpp"
#include "emn/tape.hpp"

namespace emn {

/// Raised by output_feature when the pool holds no entity.
class EmptyPoolError : public Error {
public:
    EmptyPoolError() : Error("no entities to retrieve: memory pool is empty") {}
};

/// Weights of the iterative retrieval (output feature) module.
struct RetrievalParams {
    GruParams q_gru;      // Q update: input d_ent, hidden d_sent
    GruParams o_gru;      // O update: input d_ent, hidden d_sent
    GruParams score_gru;  // composes an entity into Q before scoring
    Tensor score_w;       // 1 x d_sent
    Tensor score_b;       // [1]

    static RetrievalParams random(std::size_t d_ent, std::size_t d_sent, Rng& rng);
    static RetrievalParams zeros(std::size_t d_ent, std::size_t d_sent);
    void collect(ParamView& view, std::string_view prefix);
};

struct RetrievalVars {
    GruVars q_gru, o_gru, score_gru;
    Var score_w, score_b;
    static RetrievalVars bind(Tape& tape, const RetrievalParams& p);
    static RetrievalVars freeze(Tape& tape, const RetrievalParams& p);
    std::vector<Var> all() const;
};

/// Weights of the response module.
struct ResponseParams {
    Tensor out_w;       // vocab x d_sent
    Tensor out_b;       // vocab
    GruParams seq_gru;  // O update while generating a sentence: input d_emb

    static ResponseParams random(std::size_t vocab_size, std::size_t d_sent, std::size_t d_emb, Rng& rng);
    static ResponseParams zeros(std::size_t vocab_size, std::size_t d_sent, std::size_t d_emb);
    void collect(ParamView& view, std::string_view prefix);
};

struct ResponseVars {
    Var out_w, out_b;
    GruVars seq_gru;
    static ResponseVars bind(Tape& tape, const ResponseParams& p);
    static ResponseVars freeze(Tape& tape, const ResponseParams& p);
    std::vector<Var> all() const;
};

/// p(e, Q) = sigmoid(W . GRU(Q, e) + b), with Q as the GRU state and e as
/// its input.
Var score_entity(Tape& tape, const RetrievalVars& p, Var entity, Var query);
double score_entity(const RetrievalParams& p, const Tensor& entity, const Tensor& query);

struct HopRecord {
    std::string token;
    double score = 0.0;
    /// ||O_j - O_{j-1}|| / max(||O_{j-1}||, 1e-8)
    double change = 0.0;
};

struct RetrievalTrace {
    std::vector<HopRecord> hops;
    Tensor output;

    bool selected(std::string_view token) const;
};

struct FeatureResult {
    Var output;
    RetrievalTrace trace;
    /// One score per pool slot, in pool order: the score at the hop that
    /// selected the entity, or its hop-1 score if it was never selected.
    std::vector<std::pair<std::string, Var>> entity_scores;
};

/// Iterative retrieval with O_0 = Q_0 = q. Hop j selects the unselected
/// entity with the highest score against Q_{j-1} (lowest pool index wins
/// ties), then O_j = tanh(GRU(O_{j-1}, p_j e_j)) and
/// Q_j = tanh(GRU(Q_{j-1}, e_j)). Runs at most min(max_hops, |pool|) hops
/// and stops once the relative change of O drops below eps.
/// Selection is a hard argmax; gradients follow the selected path.
FeatureResult output_feature(Tape& tape, const RetrievalVars& p, const MemoryPool& pool, Var query,
                             std::size_t max_hops, double eps);
RetrievalTrace output_feature(const MemoryPool& pool, const Tensor& query, const RetrievalParams& p,
                              std::size_t max_hops, double eps);

/// softmax(tanh(W' O + b)) over the whole vocabulary.
Var answer_word(Tape& tape, const ResponseVars& p, Var output);
Tensor answer_word(const ResponseParams& p, const Tensor& output);

/// Greedy sentence generation: emit argmax of softmax(tanh(W' O + b)), then
/// O <- tanh(GRU(O, embedding[w])). Stops at eos (not emitted) or max_len.
std::vector<WordId> answer_sequence(const ResponseParams& p, const Tensor& embedding, const Tensor& output,
                                    std::size_t max_len);

using EntityScores = std::vector<std::pair<std::string, Var>>;

/// sum over related r and unrelated i of max(0, gamma - (p_r - p_i)).
/// Entities named in `related` but absent from `scores` are ignored.
Var entity_margin_term(Tape& tape, const EntityScores& scores, const std::vector<std::string>& related,
                       double gamma);
/// sum over candidates l != answer of max(0, gamma - (p_answer - p_l)).
/// An empty candidate list means the whole vocabulary.
Var word_margin_term(Tape& tape, Var distribution, WordId answer, const std::vector<WordId>& candidates,
                     double gamma);
/// lambda * sum of squared parameter values.
Var regularizer(Tape& tape, const std::vector<Var>& theta, double lambda);

/// Entity margin + word margin + regularizer. Throws Error without related
/// entities (use loss_weak).
Var loss_full(Tape& tape, const std::vector<std::string>& related, const EntityScores& scores, Var distribution,
              WordId answer, const std::vector<WordId>& candidates, double gamma, double lambda,
              const std::vector<Var>& theta);
/// Word margin + regularizer.
Var loss_weak(Tape& tape, Var distribution, WordId answer, const std::vector<WordId>& candidates, double gamma,
              double lambda, const std::vector<Var>& theta);

/// One question with the story prefix it is asked about.
struct QAExample {
    std::string story_id;
    std::vector<EncodedStatement> statements;
    std::vector<WordId> question;
    WordId answer = kUnkId;
    /// Gold related entities; empty means weak supervision.
    std::vector<std::string> related;
    /// Answer candidates for the word margin; empty means whole vocabulary.
    std::vector<WordId> candidates;
};

struct QAModel {
    RetrievalParams retrieval;
    ResponseParams response;

    static QAModel random(std::size_t vocab_size, std::size_t d_ent, std::size_t d_sent, std::size_t d_emb, Rng& rng);
    void collect(ParamView& view);
};

/// Frozen reading components shared by training and evaluation.
struct Reader {
    const LstmParams* f1 = nullptr;
    const F2Params* f2 = nullptr;
    const EmbeddingTable* table = nullptr;
    TrainConfig cfg;
};

/// Memory and question vector of an example after reading its story.
struct ReadExample {
    MemoryPool pool;
    Tensor query;
};

/// Reads every example's story and encodes its question.
std::vector<ReadExample> read_examples(const std::vector<QAExample>& dataset, const Reader& reader);

struct QATrainResult {
    QAModel model;
    std::vector<double> epoch_loss;
    std::vector<double> epoch_accuracy;
};

/// Sequential SGD over the margin losses with f1 and f2 frozen: the
/// full loss when an example has related entities and supervision is on,
/// the weak loss otherwise. Epoch order is shuffled with `rng`.
/// Examples with an empty memory are skipped.
QATrainResult train_qa(const std::vector<QAExample>& dataset, const Reader& reader, QAModel init, Rng& rng,
                       const EpochCallback& on_epoch = {});

struct Prediction {
    WordId answer = kUnkId;
    std::vector<std::string> retrieved;
};

struct EvalMetrics {
    std::size_t n = 0;
    std::size_t correct = 0;
    double accuracy = 0.0;
    double mean_hops = 0.0;
    /// Share of gold related entities that appear in retrieval traces.
    double related_hit_rate = 0.0;
    std::size_t related_total = 0;
    std::vector<WordId> predictions;
};

using Predictor = std::function<Prediction(const QAExample&)>;

EvalMetrics evaluate(const std::vector<QAExample>& dataset, const Predictor& predict);

/// Predicts with a trained model. An example whose memory is empty gets
/// kUnkId and an empty trace.
Prediction predict(const QAModel& model, const ReadExample& read, const TrainConfig& cfg);
EvalMetrics evaluate(const std::vector<QAExample>& dataset, const QAModel& model, const Reader& reader);

}  // namespace emn
