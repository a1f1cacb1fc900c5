#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "emn/tape.hpp"
#include "emn/tensor.hpp"

namespace emn {

/// Owning, insertion-ordered collection of named tensors.
///
/// Used for gradients, snapshots and checkpoints. Names are unique.
class ParamSet {
public:
    using Entry = std::pair<std::string, Tensor>;

    void add(std::string name, Tensor value);
    bool contains(std::string_view name) const;
    Tensor& at(std::string_view name);
    const Tensor& at(std::string_view name) const;

    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }
    auto begin() const { return entries_.begin(); }
    auto end() const { return entries_.end(); }
    auto begin() { return entries_.begin(); }
    auto end() { return entries_.end(); }

    /// Same keys and shapes, all zeros.
    ParamSet zeros_like() const;
    /// Sum of squares over every entry.
    double squared_norm() const;

    friend bool operator==(const ParamSet& a, const ParamSet& b) { return a.entries_ == b.entries_; }

private:
    std::vector<Entry> entries_;
    std::unordered_map<std::string, std::size_t> index_;
};

/// Non-owning, insertion-ordered view of named tensors that live inside
/// model structs. Model structs expose themselves through `collect`.
class ParamView {
public:
    using Entry = std::pair<std::string, Tensor*>;

    void add(std::string name, Tensor& tensor);
    /// Appends every entry of `other`.
    void append(const ParamView& other);
    static ParamView of(ParamSet& set);

    std::size_t size() const { return entries_.size(); }
    auto begin() const { return entries_.begin(); }
    auto end() const { return entries_.end(); }

    /// Deep copy of the viewed tensors.
    ParamSet snapshot() const;
    /// Overwrites the viewed tensors from a set with identical keys and shapes.
    void assign(const ParamSet& values);
    double squared_norm() const;
    std::size_t scalar_count() const;

private:
    std::vector<Entry> entries_;
};

/// Runs `tape.backward(loss)` and gathers gradients for `params`, keyed like
/// the view. Parameters never bound on the tape get zero gradients.
ParamSet backward(Tape& tape, Var loss, const ParamView& params);

/// In-place update theta <- theta - lr * g. Keys must match in order.
void sgd_step(const ParamView& params, const ParamSet& grads, double lr);

/// Rescales `grads` so that their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping. max_norm <= 0 disables clipping.
double clip_global_norm(ParamSet& grads, double max_norm);

/// Builds a scalar loss on the given tape from the current parameter values.
using Objective = std::function<Var(Tape&)>;

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::string worst_param;
    std::size_t worst_index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    std::size_t coordinates = 0;
};

/// Compares analytic gradients against central differences
/// (f(theta+eps) - f(theta-eps)) / (2 eps), one coordinate at a time.
/// Relative error uses the denominator max(|a|, |n|, 1e-8).
///
/// Throws Error if two evaluations at the same point disagree or if eps is
/// outside (0, 1e-2]. Parameters are restored before returning.
GradCheckResult grad_check(const Objective& fn, const ParamView& params, double eps);

}  // namespace emn
