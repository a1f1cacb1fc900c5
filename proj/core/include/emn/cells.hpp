#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <string_view>
#include <vector>

#include "emn/config.hpp"
#include "emn/params.hpp"
#include "emn/rng.hpp"
#include "emn/tape.hpp"
#include "emn/vocabulary.hpp"

namespace emn {

/// Gated recurrent unit weights. W_* act on the input, U_* on the hidden
/// state; b_* are biases (zero-initialised).
struct GruParams {
    Tensor w_z, u_z, w_r, u_r, w_h, u_h;
    Tensor b_z, b_r, b_h;

    static GruParams zeros(std::size_t input_dim, std::size_t hidden_dim);
    static GruParams random(std::size_t input_dim, std::size_t hidden_dim, Rng& rng);

    std::size_t input_dim() const { return w_z.cols(); }
    std::size_t hidden_dim() const { return w_z.rows(); }
    /// Throws DimensionError if the nine tensors disagree.
    void validate() const;
    void collect(ParamView& view, std::string_view prefix);
};

struct GruVars {
    Var w_z, u_z, w_r, u_r, w_h, u_h, b_z, b_r, b_h;

    /// Differentiable binding.
    static GruVars bind(Tape& tape, const GruParams& p);
    /// Frozen binding: no gradients flow into the weights.
    static GruVars freeze(Tape& tape, const GruParams& p);
};

/// z = sigmoid(W_z x + U_z h + b_z)
/// r = sigmoid(W_r x + U_r h + b_r)
/// g = tanh(W x + U (r * h) + b_h)
/// h' = (1 - z) * h + z * g
Var gru_step(Tape& tape, const GruVars& p, Var h_prev, Var x);
Tensor gru_step(const GruParams& p, const Tensor& h_prev, const Tensor& x);

/// Forget-gate bias of a freshly initialised LSTM cell.
inline constexpr double kForgetBias = 1.0;

/// Glorot half-width sqrt(6 / (rows + cols)) for a uniform weight draw.
inline double glorot_scale(std::size_t rows, std::size_t cols) {
    return std::sqrt(6.0 / static_cast<double>(rows + cols));
}

/// One LSTM cell: input (i), forget (f), output (o) gates and candidate (c).
/// `random` draws weights from +-glorot_scale and sets b_f to
/// kForgetBias.
struct LstmCellParams {
    Tensor w_i, u_i, b_i;
    Tensor w_f, u_f, b_f;
    Tensor w_o, u_o, b_o;
    Tensor w_c, u_c, b_c;

    static LstmCellParams zeros(std::size_t input_dim, std::size_t hidden_dim);
    static LstmCellParams random(std::size_t input_dim, std::size_t hidden_dim, Rng& rng);

    std::size_t input_dim() const { return w_i.cols(); }
    std::size_t hidden_dim() const { return w_i.rows(); }
    void collect(ParamView& view, std::string_view prefix);
};

struct LstmCellVars {
    Var w_i, u_i, b_i, w_f, u_f, b_f, w_o, u_o, b_o, w_c, u_c, b_c;
    static LstmCellVars bind(Tape& tape, const LstmCellParams& p);
    static LstmCellVars freeze(Tape& tape, const LstmCellParams& p);
};

struct LstmState {
    Tensor h, c;
};

struct LstmStateVars {
    Var h, c;
};

/// Standard four-gate update:
///   i = sigmoid(W_i x + U_i h + b_i)
///   f = sigmoid(W_f x + U_f h + b_f)
///   o = sigmoid(W_o x + U_o h + b_o)
///   g = tanh(W_c x + U_c h + b_c)
///   c' = f * c + i * g
///   h' = o * tanh(c')
LstmStateVars lstm_step(Tape& tape, const LstmCellVars& p, LstmStateVars state, Var x);
LstmState lstm_step(const LstmCellParams& p, const LstmState& state, const Tensor& x);

/// Half-width of the uniform word-embedding initialisation, on the scale of
/// pretrained word vectors.
inline constexpr double kEmbeddingScale = 1.0;

/// Sequence autoencoder: an encoder LSTM whose final hidden state is the
/// sentence vector, and a decoder LSTM that regenerates the tokens from it.
struct LstmParams {
    Tensor embedding;  // vocab x d_emb
    LstmCellParams encoder;
    LstmCellParams decoder;
    Tensor bos;      // learned decoder input at step 0
    Tensor context;  // d_emb x d_hid, adds context * s to every decoder input
    Tensor out_w;  // vocab x d_hid
    Tensor out_b;  // vocab

    static LstmParams random(std::size_t vocab_size, std::size_t embed_dim, std::size_t hidden_dim, Rng& rng);

    std::size_t vocab_size() const { return embedding.rows(); }
    std::size_t embed_dim() const { return embedding.cols(); }
    std::size_t hidden_dim() const { return encoder.hidden_dim(); }
    void collect(ParamView& view, std::string_view prefix);
};

struct LstmVars {
    Var embedding;
    LstmCellVars encoder, decoder;
    Var bos, context, out_w, out_b;
    static LstmVars bind(Tape& tape, const LstmParams& p);
};

/// A sentence vector and the index of the sentence it came from.
struct SentenceVec {
    Tensor value;
    std::size_t source = 0;
};

Var encode(Tape& tape, const LstmVars& p, const std::vector<WordId>& tokens);
/// Final encoder hidden state from a zero initial state. Throws Error on an
/// empty sentence or an id outside the vocabulary.
SentenceVec encode(const LstmParams& p, const std::vector<WordId>& tokens, std::size_t source = 0);

/// Greedy decoding from (h = s, c = s) starting at the learned BOS input;
/// every step's input is the previous word's embedding plus context * s.
/// Stops at eos (not emitted) or after max_len tokens; ties break to the
/// lowest word id.
std::vector<WordId> decode(const LstmParams& p, const SentenceVec& s, std::size_t max_len);

/// Index of the largest value; the first one wins ties.
std::size_t argmax(const Tensor& v);

/// Mean per-token cross-entropy of reconstructing `tokens` followed by eos
/// under teacher forcing. When `correct` is given, adds the number of
/// teacher-forced argmax hits over the len+1 targets.
Var autoencoder_loss(Tape& tape, const LstmVars& p, const std::vector<WordId>& tokens,
                     std::size_t* correct = nullptr);

struct PretrainResult {
    LstmParams params;
    /// Corpus loss of the initial parameters.
    double initial_loss = 0.0;
    /// Corpus loss of the accepted parameters after each epoch.
    std::vector<double> epoch_loss;
    /// Teacher-forced token accuracy of the accepted parameters.
    std::vector<double> epoch_accuracy;
    std::vector<double> epoch_lr;
    double final_loss = 0.0;
};

using EpochCallback = std::function<void(std::size_t epoch, double loss, double accuracy)>;

/// Per-sentence SGD on the reconstruction cross-entropy for cfg.ae_epochs
/// epochs in seeded shuffled order. After each epoch the corpus loss is
/// measured. An epoch that raises it is rolled back and retried at half the
/// rate; an accepted epoch restores cfg.ae_lr. The recorded loss series
/// never increases.
PretrainResult pretrain_autoencoder(const std::vector<std::vector<WordId>>& corpus, LstmParams init,
                                    const TrainConfig& cfg, Rng& rng, const EpochCallback& on_epoch = {});

/// Fraction of positions where greedy decode(encode(s)) matches s,
/// over all tokens of all sentences (missing positions count as misses).
double reconstruction_accuracy(const LstmParams& p, const std::vector<std::vector<WordId>>& corpus);

}  // namespace emn
