#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>

namespace emn {

/// Flat `key = value` pairs; `#` starts a comment.
using KeyValues = std::map<std::string, std::string, std::less<>>;

KeyValues parse_key_values(std::string_view text);
KeyValues read_key_values(const std::string& path);

/// Every hyperparameter of the staged training pipeline.
struct TrainConfig {
    std::size_t d_sent = 50;
    std::size_t d_ent = 50;
    std::size_t max_hops = 3;
    double eps = 1e-3;
    double gamma = 0.1;
    double lambda = 1e-4;
    std::size_t mem_steps = 5;
    double mem_lr = 0.05;
    double qa_lr = 0.01;
    double ae_lr = 0.05;
    double f2_lr = 0.05;
    std::size_t ae_epochs = 50;
    std::size_t f2_epochs = 2;
    std::size_t qa_epochs = 20;
    /// Global gradient-norm clip for autoencoder updates; 0 disables.
    double ae_clip = 5.0;
    /// Stop autoencoder pretraining once the teacher-forced token accuracy of
    /// an epoch reaches this value; values above 1 never trigger.
    double ae_target_accuracy = 2.0;
    /// Use related-entity supervision (full loss) when an example has it.
    bool full_supervision = true;
    std::uint64_t seed = 1;
    /// Optional GloVe-style text file initialising word and entity vectors.
    std::string embeddings;

    /// Throws Error on a non-positive rate or dimension.
    void validate() const;

    /// Sets one field from text; returns false if `key` is not a field.
    bool set(std::string_view key, std::string_view value);
    /// Applies every recognised key; unrecognised keys are left for others.
    void apply(const KeyValues& values);

    /// `key=value` lines in declaration order; doubles at 17 significant
    /// digits so that parsing the text back is lossless.
    std::string to_text() const;
    static TrainConfig from_text(std::string_view text);

    friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// Formats a double at 17 significant digits.
std::string format_double(double v);
double parse_double(std::string_view text, std::string_view what);
std::uint64_t parse_uint(std::string_view text, std::string_view what);

}  // namespace emn
