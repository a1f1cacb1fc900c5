#include "emn/tape.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace emn {

namespace {

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
    throw DimensionError(std::string(op) + ": incompatible shapes " + a.shape_string() + " and " +
                         b.shape_string());
}

void require_vector(const char* op, const Tensor& t) {
    if (!t.is_vector()) throw DimensionError(std::string(op) + ": expected a vector, got " + t.shape_string());
}

void require_scalar(const char* op, const Tensor& t) {
    if (!t.is_scalar()) throw DimensionError(std::string(op) + ": expected a scalar, got " + t.shape_string());
}

void require_same(const char* op, const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) shape_error(op, a, b);
}

void require_matvec(const char* op, const Tensor& w, const Tensor& x) {
    if (!w.is_matrix() || !x.is_vector() || w.cols() != x.rows()) shape_error(op, w, x);
}

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

const char* op_name(Op op) {
    switch (op) {
        case Op::Constant: return "constant";
        case Op::Param: return "param";
        case Op::MatVec: return "matvec";
        case Op::Affine: return "affine";
        case Op::Affine2: return "affine2";
        case Op::Add: return "add";
        case Op::Sub: return "sub";
        case Op::Hadamard: return "hadamard";
        case Op::Scale: return "scale";
        case Op::OneMinus: return "one_minus";
        case Op::Tanh: return "tanh";
        case Op::Sigmoid: return "sigmoid";
        case Op::Relu: return "relu";
        case Op::Softmax: return "softmax";
        case Op::Dot: return "dot";
        case Op::Sum: return "sum";
        case Op::SqNorm: return "sqnorm";
        case Op::Hinge: return "hinge";
        case Op::Pick: return "pick";
        case Op::Row: return "row";
        case Op::NegLogSoftmax: return "neg_log_softmax";
    }
    return "?";
}

std::size_t Tape::check(Var v) const {
    if (v.tape != this) throw Error("variable does not belong to this tape");
    return v.id;
}

const Tensor& Tape::value(Var v) const { return nodes_[check(v)].value; }

double Tape::scalar(Var v) const {
    const Tensor& t = value(v);
    require_scalar("scalar", t);
    return t[0];
}

Op Tape::op(Var v) const { return nodes_[check(v)].op; }

template <class Lookup>
Tensor Tape::evaluate(const Node& node, Lookup&& operand) {
    auto arg = [&](int k) -> const Tensor& { return operand(node.args[k]); };
    switch (node.op) {
        case Op::Constant:
        case Op::Param:
            return node.value;
        case Op::MatVec:
        case Op::Affine:
        case Op::Affine2: {
            const Tensor& w = arg(0);
            const Tensor& x = arg(1);
            const std::size_t m = w.rows();
            const std::size_t n = w.cols();
            Tensor y = Tensor::zeros(m);
            for (std::size_t i = 0; i < m; ++i) {
                const double* wr = w.data() + i * n;
                double s = 0.0;
                for (std::size_t j = 0; j < n; ++j) s += wr[j] * x[j];
                y[i] = s;
            }
            if (node.op == Op::Affine) {
                const Tensor& b = arg(2);
                for (std::size_t i = 0; i < m; ++i) y[i] = y[i] + b[i];
            } else if (node.op == Op::Affine2) {
                const Tensor& u = arg(2);
                const Tensor& h = arg(3);
                const Tensor& b = arg(4);
                const std::size_t k = u.cols();
                for (std::size_t i = 0; i < m; ++i) {
                    const double* ur = u.data() + i * k;
                    double s = 0.0;
                    for (std::size_t j = 0; j < k; ++j) s += ur[j] * h[j];
                    y[i] = (y[i] + s) + b[i];
                }
            }
            return y;
        }
        case Op::Add:
        case Op::Sub:
        case Op::Hadamard: {
            Tensor y = arg(0);
            const Tensor& b = arg(1);
            for (std::size_t i = 0; i < y.size(); ++i) {
                if (node.op == Op::Add) y[i] = y[i] + b[i];
                else if (node.op == Op::Sub) y[i] = y[i] - b[i];
                else y[i] = y[i] * b[i];
            }
            return y;
        }
        case Op::Scale: {
            Tensor y = arg(0);
            const double s = arg(1)[0];
            for (double& v : y.values()) v *= s;
            return y;
        }
        case Op::OneMinus:
        case Op::Tanh:
        case Op::Sigmoid:
        case Op::Relu: {
            Tensor y = arg(0);
            for (double& v : y.values()) {
                if (node.op == Op::OneMinus) v = 1.0 - v;
                else if (node.op == Op::Tanh) v = std::tanh(v);
                else if (node.op == Op::Sigmoid) v = logistic(v);
                else v = v > 0.0 ? v : 0.0;
            }
            return y;
        }
        case Op::Softmax: {
            Tensor y = arg(0);
            const double m = *std::max_element(y.values().begin(), y.values().end());
            double s = 0.0;
            for (double& v : y.values()) {
                v = std::exp(v - m);
                s += v;
            }
            for (double& v : y.values()) v /= s;
            return y;
        }
        case Op::Dot:
            return Tensor::scalar(emn::dot(arg(0), arg(1)));
        case Op::Sum: {
            double s = 0.0;
            for (double v : arg(0).values()) s += v;
            return Tensor::scalar(s);
        }
        case Op::SqNorm: {
            const Tensor& a = arg(0);
            return Tensor::scalar(emn::dot(a, a));
        }
        case Op::Hinge: {
            const double v = node.aux - (arg(0)[0] - arg(1)[0]);
            return Tensor::scalar(v > 0.0 ? v : 0.0);
        }
        case Op::Pick:
            return Tensor::scalar(arg(0)[node.index]);
        case Op::Row:
            return arg(0).row(node.index);
        case Op::NegLogSoftmax: {
            const Tensor& x = arg(0);
            const double m = *std::max_element(x.values().begin(), x.values().end());
            double s = 0.0;
            for (double v : x.values()) s += std::exp(v - m);
            return Tensor::scalar((m + std::log(s)) - x[node.index]);
        }
    }
    throw Error("unknown tape operation");
}

Var Tape::record(Op op, std::initializer_list<Var> args, double aux, std::size_t index) {
    Node node;
    node.op = op;
    node.aux = aux;
    node.index = index;
    for (Var a : args) {
        const std::size_t id = check(a);
        node.args[node.nargs++] = id;
        node.needs_grad = node.needs_grad || nodes_[id].needs_grad;
    }
    node.value = evaluate(node, [this](std::size_t id) -> const Tensor& { return nodes_[id].value; });
    node.value.require_finite(op_name(op));
    nodes_.push_back(std::move(node));
    return Var{this, nodes_.size() - 1};
}

Var Tape::constant(Tensor value) {
    if (value.empty()) throw DimensionError("constant: empty tensor");
    value.require_finite("constant");
    Node node;
    node.op = Op::Constant;
    node.value = std::move(value);
    nodes_.push_back(std::move(node));
    return Var{this, nodes_.size() - 1};
}

Var Tape::param(const Tensor& source) {
    if (auto it = bound_.find(&source); it != bound_.end()) return Var{this, it->second};
    if (source.empty()) throw DimensionError("param: empty tensor");
    source.require_finite("param");
    Node node;
    node.op = Op::Param;
    node.needs_grad = true;
    node.value = source;
    nodes_.push_back(std::move(node));
    bound_.emplace(&source, nodes_.size() - 1);
    return Var{this, nodes_.size() - 1};
}

Var Tape::matvec(Var w, Var x) {
    require_matvec("matvec", value(w), value(x));
    return record(Op::MatVec, {w, x});
}

Var Tape::affine(Var w, Var x, Var b) {
    require_matvec("affine", value(w), value(x));
    if (!value(b).is_vector() || value(b).rows() != value(w).rows()) shape_error("affine", value(w), value(b));
    return record(Op::Affine, {w, x, b});
}

Var Tape::affine2(Var w, Var x, Var u, Var h, Var b) {
    require_matvec("affine2", value(w), value(x));
    require_matvec("affine2", value(u), value(h));
    if (value(u).rows() != value(w).rows()) shape_error("affine2", value(w), value(u));
    if (!value(b).is_vector() || value(b).rows() != value(w).rows()) shape_error("affine2", value(w), value(b));
    return record(Op::Affine2, {w, x, u, h, b});
}

Var Tape::add(Var a, Var b) {
    require_same("add", value(a), value(b));
    return record(Op::Add, {a, b});
}

Var Tape::sub(Var a, Var b) {
    require_same("sub", value(a), value(b));
    return record(Op::Sub, {a, b});
}

Var Tape::hadamard(Var a, Var b) {
    require_same("hadamard", value(a), value(b));
    return record(Op::Hadamard, {a, b});
}

Var Tape::scale(Var a, Var s) {
    require_scalar("scale", value(s));
    return record(Op::Scale, {a, s});
}

Var Tape::one_minus(Var a) { return record(Op::OneMinus, {a}); }
Var Tape::tanh(Var a) { return record(Op::Tanh, {a}); }
Var Tape::sigmoid(Var a) { return record(Op::Sigmoid, {a}); }
Var Tape::relu(Var a) { return record(Op::Relu, {a}); }

Var Tape::softmax(Var a) {
    require_vector("softmax", value(a));
    return record(Op::Softmax, {a});
}

Var Tape::dot(Var a, Var b) {
    require_same("dot", value(a), value(b));
    return record(Op::Dot, {a, b});
}

Var Tape::sum(Var a) { return record(Op::Sum, {a}); }
Var Tape::sqnorm(Var a) { return record(Op::SqNorm, {a}); }

Var Tape::hinge(double margin, Var pos, Var neg) {
    require_scalar("hinge", value(pos));
    require_scalar("hinge", value(neg));
    return record(Op::Hinge, {pos, neg}, margin);
}

Var Tape::pick(Var a, std::size_t index) {
    if (index >= value(a).size())
        throw DimensionError("pick: index " + std::to_string(index) + " out of range for " + value(a).shape_string());
    return record(Op::Pick, {a}, 0.0, index);
}

Var Tape::row(Var matrix, std::size_t index) {
    const Tensor& m = value(matrix);
    if (!m.is_matrix() || index >= m.rows())
        throw DimensionError("row: index " + std::to_string(index) + " out of range for " + m.shape_string());
    return record(Op::Row, {matrix}, 0.0, index);
}

Var Tape::neg_log_softmax(Var logits, std::size_t target) {
    require_vector("neg_log_softmax", value(logits));
    if (target >= value(logits).size())
        throw DimensionError("neg_log_softmax: target " + std::to_string(target) + " out of range for " +
                             value(logits).shape_string());
    return record(Op::NegLogSoftmax, {logits}, 0.0, target);
}

std::vector<double>& Tape::grad_slot(std::size_t id) {
    Node& n = nodes_[id];
    if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
    return n.grad;
}

void Tape::backward(Var loss) {
    const std::size_t root = check(loss);
    require_scalar("backward", nodes_[root].value);
    for (Node& n : nodes_) n.grad.clear();
    grad_slot(root)[0] = 1.0;
    for (std::size_t i = root + 1; i-- > 0;) {
        const Node& n = nodes_[i];
        if (n.grad.empty() || !n.needs_grad) continue;
        propagate(n);
    }
}

void Tape::propagate(const Node& node) {
    const std::vector<double>& g = node.grad;
    auto wants = [&](int k) { return nodes_[node.args[k]].needs_grad; };
    auto val = [&](int k) -> const Tensor& { return nodes_[node.args[k]].value; };

    switch (node.op) {
        case Op::Constant:
        case Op::Param:
            return;
        case Op::MatVec:
        case Op::Affine:
        case Op::Affine2: {
            const Tensor& w = val(0);
            const Tensor& x = val(1);
            const std::size_t m = w.rows();
            const std::size_t n = w.cols();
            if (wants(0)) {
                std::vector<double>& gw = grad_slot(node.args[0]);
                for (std::size_t i = 0; i < m; ++i) {
                    double* row = gw.data() + i * n;
                    for (std::size_t j = 0; j < n; ++j) row[j] += g[i] * x[j];
                }
            }
            if (wants(1)) {
                std::vector<double>& gx = grad_slot(node.args[1]);
                for (std::size_t i = 0; i < m; ++i) {
                    const double* row = w.data() + i * n;
                    for (std::size_t j = 0; j < n; ++j) gx[j] += row[j] * g[i];
                }
            }
            if (node.op == Op::Affine && wants(2)) {
                std::vector<double>& gb = grad_slot(node.args[2]);
                for (std::size_t i = 0; i < m; ++i) gb[i] += g[i];
            }
            if (node.op == Op::Affine2) {
                const Tensor& u = val(2);
                const Tensor& h = val(3);
                const std::size_t k = u.cols();
                if (wants(2)) {
                    std::vector<double>& gu = grad_slot(node.args[2]);
                    for (std::size_t i = 0; i < m; ++i) {
                        double* row = gu.data() + i * k;
                        for (std::size_t j = 0; j < k; ++j) row[j] += g[i] * h[j];
                    }
                }
                if (wants(3)) {
                    std::vector<double>& gh = grad_slot(node.args[3]);
                    for (std::size_t i = 0; i < m; ++i) {
                        const double* row = u.data() + i * k;
                        for (std::size_t j = 0; j < k; ++j) gh[j] += row[j] * g[i];
                    }
                }
                if (wants(4)) {
                    std::vector<double>& gb = grad_slot(node.args[4]);
                    for (std::size_t i = 0; i < m; ++i) gb[i] += g[i];
                }
            }
            return;
        }
        case Op::Add:
        case Op::Sub: {
            const double sign = node.op == Op::Add ? 1.0 : -1.0;
            if (wants(0)) {
                std::vector<double>& ga = grad_slot(node.args[0]);
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
            }
            if (wants(1)) {
                std::vector<double>& gb = grad_slot(node.args[1]);
                for (std::size_t i = 0; i < g.size(); ++i) gb[i] += sign * g[i];
            }
            return;
        }
        case Op::Hadamard: {
            const Tensor& a = val(0);
            const Tensor& b = val(1);
            if (wants(0)) {
                std::vector<double>& ga = grad_slot(node.args[0]);
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * b[i];
            }
            if (wants(1)) {
                std::vector<double>& gb = grad_slot(node.args[1]);
                for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * a[i];
            }
            return;
        }
        case Op::Scale: {
            const Tensor& a = val(0);
            const double s = val(1)[0];
            if (wants(0)) {
                std::vector<double>& ga = grad_slot(node.args[0]);
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * s;
            }
            if (wants(1)) {
                double acc = 0.0;
                for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * a[i];
                grad_slot(node.args[1])[0] += acc;
            }
            return;
        }
        case Op::OneMinus: {
            if (!wants(0)) return;
            std::vector<double>& ga = grad_slot(node.args[0]);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] -= g[i];
            return;
        }
        case Op::Tanh:
        case Op::Sigmoid:
        case Op::Relu: {
            if (!wants(0)) return;
            const Tensor& y = node.value;
            std::vector<double>& ga = grad_slot(node.args[0]);
            for (std::size_t i = 0; i < g.size(); ++i) {
                double d;
                if (node.op == Op::Tanh) d = 1.0 - y[i] * y[i];
                else if (node.op == Op::Sigmoid) d = y[i] * (1.0 - y[i]);
                else d = val(0)[i] > 0.0 ? 1.0 : 0.0;
                ga[i] += g[i] * d;
            }
            return;
        }
        case Op::Softmax: {
            if (!wants(0)) return;
            const Tensor& y = node.value;
            double inner = 0.0;
            for (std::size_t i = 0; i < g.size(); ++i) inner += g[i] * y[i];
            std::vector<double>& ga = grad_slot(node.args[0]);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += y[i] * (g[i] - inner);
            return;
        }
        case Op::Dot: {
            const Tensor& a = val(0);
            const Tensor& b = val(1);
            if (wants(0)) {
                std::vector<double>& ga = grad_slot(node.args[0]);
                for (std::size_t i = 0; i < a.size(); ++i) ga[i] += g[0] * b[i];
            }
            if (wants(1)) {
                std::vector<double>& gb = grad_slot(node.args[1]);
                for (std::size_t i = 0; i < b.size(); ++i) gb[i] += g[0] * a[i];
            }
            return;
        }
        case Op::Sum: {
            if (!wants(0)) return;
            std::vector<double>& ga = grad_slot(node.args[0]);
            for (double& v : ga) v += g[0];
            return;
        }
        case Op::SqNorm: {
            if (!wants(0)) return;
            const Tensor& a = val(0);
            std::vector<double>& ga = grad_slot(node.args[0]);
            for (std::size_t i = 0; i < a.size(); ++i) ga[i] += 2.0 * a[i] * g[0];
            return;
        }
        case Op::Hinge: {
            if (node.value[0] <= 0.0) return;
            if (wants(0)) grad_slot(node.args[0])[0] -= g[0];
            if (wants(1)) grad_slot(node.args[1])[0] += g[0];
            return;
        }
        case Op::Pick: {
            if (!wants(0)) return;
            grad_slot(node.args[0])[node.index] += g[0];
            return;
        }
        case Op::Row: {
            if (!wants(0)) return;
            const std::size_t n = val(0).cols();
            std::vector<double>& gm = grad_slot(node.args[0]);
            for (std::size_t j = 0; j < n; ++j) gm[node.index * n + j] += g[j];
            return;
        }
        case Op::NegLogSoftmax: {
            if (!wants(0)) return;
            const Tensor& x = val(0);
            const double m = *std::max_element(x.values().begin(), x.values().end());
            double s = 0.0;
            for (double v : x.values()) s += std::exp(v - m);
            std::vector<double>& ga = grad_slot(node.args[0]);
            for (std::size_t i = 0; i < x.size(); ++i) {
                const double p = std::exp(x[i] - m) / s;
                ga[i] += g[0] * (p - (i == node.index ? 1.0 : 0.0));
            }
            return;
        }
    }
}

Tensor Tape::gradient(Var v) const {
    const Node& n = nodes_[check(v)];
    Tensor g = n.value;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = n.grad.empty() ? 0.0 : n.grad[i];
    return g;
}

Tensor Tape::gradient_of(const Tensor& source) const {
    auto it = bound_.find(&source);
    if (it == bound_.end()) {
        Tensor z = source;
        for (double& v : z.values()) v = 0.0;
        return z;
    }
    return gradient(Var{this, it->second});
}

std::vector<Tensor> Tape::replay() const {
    std::vector<Tensor> out;
    out.reserve(nodes_.size());
    for (const Node& n : nodes_) {
        out.push_back(evaluate(n, [&out](std::size_t id) -> const Tensor& { return out[id]; }));
    }
    return out;
}

}  // namespace emn
