#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "emn/cells.hpp"
#include "emn/config.hpp"
#include "emn/corpus.hpp"
#include "emn/embeddings.hpp"
#include "emn/memory.hpp"
#include "emn/qanet.hpp"
#include "emn/vocabulary.hpp"

namespace emn {

/// Everything a trained pipeline needs at evaluation time.
struct Model {
    TrainConfig config;
    Vocabulary vocab;
    LstmParams f1;
    F2Params f2;
    QAModel qa;

    /// Randomly initialised parameters sized for `vocab` and `config`.
    static Model create(const TrainConfig& config, Vocabulary vocab, Rng& rng);

    /// Parameter blocks with the prefixes f1., f2., retrieval., response.
    void collect(ParamView& view);
};

/// Statement, question and answer tokens of every story, in first-seen order.
Vocabulary build_vocabulary(const std::vector<Story>& stories);

/// Distinct statements and questions as word ids, in first-seen order.
std::vector<std::vector<WordId>> autoencoder_corpus(const std::vector<Story>& stories, const Vocabulary& vocab);

struct PreparedData {
    std::vector<QAExample> examples;
    std::vector<F2Story> f2_stories;
    /// Tokens that mapped to the unknown id.
    std::size_t unknown = 0;
};

/// One QA example per question, over the statements preceding it. The gold
/// answer is the first listed answer word.
PreparedData prepare(const std::vector<Story>& stories, const Vocabulary& vocab);

/// Rows of word vectors as an embedding table, skipping the reserved ids.
EmbeddingTable table_from_embedding(const Vocabulary& vocab, const Tensor& embedding);

/// The table used to initialise entity states: the configured embeddings
/// file when set, the autoencoder's word embeddings otherwise.
EmbeddingTable entity_table(const Model& model);

struct MetricRow {
    std::size_t epoch = 0;
    std::string stage;
    double loss = 0.0;
    double accuracy = 0.0;
};

/// "epoch,stage,loss,accuracy" header plus one line per row.
std::string metrics_csv(const std::vector<MetricRow>& rows);

/// Autoencoder, then generalization network, then the QA networks.
/// Throws NumericError when a stage diverges.
Model train_pipeline(const std::vector<Story>& train, const TrainConfig& cfg, std::vector<MetricRow>* rows = nullptr,
                     std::ostream* log = nullptr);

struct EvalReport {
    EvalMetrics metrics;
    std::size_t unknown = 0;
};

EvalReport evaluate_model(const Model& model, const std::vector<Story>& data);

class CheckpointError : public Error {
public:
    using Error::Error;
};

inline constexpr std::string_view kCheckpointMagic = "ENTMEMNN";
inline constexpr int kCheckpointVersion = 1;

void save_checkpoint(std::ostream& out, const Model& model);
std::string checkpoint_text(const Model& model);
void save_checkpoint(const std::string& path, const Model& model);
/// Throws CheckpointError on a bad header, a version mismatch, a truncated
/// block or a shape that does not fit the configuration.
Model load_checkpoint(std::istream& in);
Model load_checkpoint(const std::string& path);

struct GradCheckEntry {
    std::string name;
    GradCheckResult result;
    double threshold = 0.0;
    bool passed = false;
};

/// Finite-difference checks of gru_step, lstm_step, reconstruct and the
/// end-to-end loss_full at dims <= 8. `threshold` <= 0 keeps the default
/// per-check thresholds (1e-4; 1e-3 for loss_full).
std::vector<GradCheckEntry> run_gradchecks(std::uint64_t seed, double threshold = 0.0);

/// Synthetic data generation settings for `gendata`.
struct DataConfig {
    std::string task = "where_is";
    WorldConfig world;
    std::size_t test_stories = 20;
    PolarityConfig polarity;
    std::size_t test_per_class = 100;

    /// Returns false when `key` is not a data setting.
    bool set(std::string_view key, std::string_view value);
    void validate() const;
};

struct GeneratedData {
    std::vector<Story> train;
    std::vector<Story> test;
};

/// The test split uses a seed derived from the training seed.
GeneratedData generate(const DataConfig& cfg);

}  // namespace emn
