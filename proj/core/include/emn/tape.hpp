#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <unordered_map>
#include <vector>

#include "emn/tensor.hpp"

namespace emn {

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; only meaningful
/// together with the tape that issued it.
struct Var {
    const Tape* tape = nullptr;
    std::size_t id = 0;

    bool valid() const { return tape != nullptr; }
};

enum class Op : std::uint8_t {
    Constant,
    Param,
    MatVec,
    Affine,
    Affine2,
    Add,
    Sub,
    Hadamard,
    Scale,
    OneMinus,
    Tanh,
    Sigmoid,
    Relu,
    Softmax,
    Dot,
    Sum,
    SqNorm,
    Hinge,
    Pick,
    Row,
    NegLogSoftmax,
};

const char* op_name(Op op);

/// Reverse-mode differentiation tape.
///
/// Every operation evaluates eagerly, appends one record holding its operand
/// ids and its forward value, and returns a Var. `backward` walks the records
/// in strict reverse order once. Scalars are vectors of length 1.
///
/// A tape is single-threaded. Parameters are bound with `param`, which keys
/// the leaf by the source tensor's address so that binding the same tensor
/// twice yields the same Var and gradients accumulate into one place.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Leaf that never receives a gradient.
    Var constant(Tensor value);
    /// Differentiable leaf holding a copy of `source`.
    Var param(const Tensor& source);

    Var matvec(Var w, Var x);
    /// W x + b
    Var affine(Var w, Var x, Var b);
    /// W x + U h + b, the pre-activation shape shared by every gate.
    Var affine2(Var w, Var x, Var u, Var h, Var b);
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var hadamard(Var a, Var b);
    /// a * s for a length-1 s.
    Var scale(Var a, Var s);
    /// 1 - a
    Var one_minus(Var a);
    Var tanh(Var a);
    Var sigmoid(Var a);
    Var relu(Var a);
    Var softmax(Var a);
    Var dot(Var a, Var b);
    Var sum(Var a);
    Var sqnorm(Var a);
    /// max(0, margin - (pos - neg)) for scalar pos/neg.
    Var hinge(double margin, Var pos, Var neg);
    Var pick(Var a, std::size_t index);
    Var row(Var matrix, std::size_t index);
    /// -log softmax(logits)[target], evaluated with the max shift.
    Var neg_log_softmax(Var logits, std::size_t target);

    const Tensor& value(Var v) const;
    double scalar(Var v) const;
    Op op(Var v) const;
    std::size_t size() const { return nodes_.size(); }

    /// Fills gradients of `loss` (a scalar recorded here) for every record.
    void backward(Var loss);

    /// Gradient of the last backward pass; zeros when unreachable.
    Tensor gradient(Var v) const;
    /// Gradient accumulated for the parameter bound from `source`.
    Tensor gradient_of(const Tensor& source) const;
    bool is_bound(const Tensor& source) const { return bound_.contains(&source); }

    /// Recomputes every record from its operands' replayed values.
    std::vector<Tensor> replay() const;

private:
    struct Node {
        Op op = Op::Constant;
        std::array<std::size_t, 5> args{};
        std::uint8_t nargs = 0;
        bool needs_grad = false;
        double aux = 0.0;
        std::size_t index = 0;
        Tensor value;
        std::vector<double> grad;
    };

    Var record(Op op, std::initializer_list<Var> args, double aux = 0.0, std::size_t index = 0);
    std::size_t check(Var v) const;

    template <class Lookup>
    static Tensor evaluate(const Node& node, Lookup&& operand);

    void propagate(const Node& node);
    std::vector<double>& grad_slot(std::size_t id);

    std::vector<Node> nodes_;
    std::unordered_map<const Tensor*, std::size_t> bound_;
};

}  // namespace emn
