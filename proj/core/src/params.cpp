#include "emn/params.hpp"

#include <algorithm>
#include <cmath>

namespace emn {

void ParamSet::add(std::string name, Tensor value) {
    if (index_.contains(name)) throw Error("duplicate parameter name '" + name + "'");
    index_.emplace(name, entries_.size());
    entries_.emplace_back(std::move(name), std::move(value));
}

bool ParamSet::contains(std::string_view name) const { return index_.contains(std::string(name)); }

Tensor& ParamSet::at(std::string_view name) {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) throw Error("unknown parameter '" + std::string(name) + "'");
    return entries_[it->second].second;
}

const Tensor& ParamSet::at(std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) throw Error("unknown parameter '" + std::string(name) + "'");
    return entries_[it->second].second;
}

ParamSet ParamSet::zeros_like() const {
    ParamSet out;
    for (const auto& [name, t] : entries_) {
        Tensor z = t;
        std::fill(z.values().begin(), z.values().end(), 0.0);
        out.add(name, std::move(z));
    }
    return out;
}

double ParamSet::squared_norm() const {
    double s = 0.0;
    for (const auto& [name, t] : entries_) s += dot(t, t);
    return s;
}

void ParamView::add(std::string name, Tensor& tensor) { entries_.emplace_back(std::move(name), &tensor); }

void ParamView::append(const ParamView& other) {
    entries_.insert(entries_.end(), other.entries_.begin(), other.entries_.end());
}

ParamView ParamView::of(ParamSet& set) {
    ParamView v;
    for (auto& [name, t] : set) v.add(name, t);
    return v;
}

ParamSet ParamView::snapshot() const {
    ParamSet out;
    for (const auto& [name, t] : entries_) out.add(name, *t);
    return out;
}

void ParamView::assign(const ParamSet& values) {
    if (values.size() != entries_.size()) throw Error("parameter count mismatch on assign");
    std::size_t i = 0;
    for (const auto& [name, t] : values) {
        auto& [own_name, target] = entries_[i++];
        if (own_name != name || !target->same_shape(t))
            throw DimensionError("parameter mismatch on assign: '" + own_name + "' vs '" + name + "'");
        *target = t;
    }
}

double ParamView::squared_norm() const {
    double s = 0.0;
    for (const auto& [name, t] : entries_) s += dot(*t, *t);
    return s;
}

std::size_t ParamView::scalar_count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : entries_) n += t->size();
    return n;
}

ParamSet backward(Tape& tape, Var loss, const ParamView& params) {
    tape.backward(loss);
    ParamSet grads;
    for (const auto& [name, t] : params) grads.add(name, tape.gradient_of(*t));
    return grads;
}

void sgd_step(const ParamView& params, const ParamSet& grads, double lr) {
    if (!(lr >= 0.0) || !std::isfinite(lr)) throw Error("learning rate must be a finite non-negative number");
    if (grads.size() != params.size()) throw Error("gradient/parameter count mismatch");
    auto g = grads.begin();
    for (const auto& [name, t] : params) {
        if (g->first != name || !g->second.same_shape(*t))
            throw DimensionError("gradient/parameter mismatch: '" + name + "' vs '" + g->first + "'");
        double* w = t->data();
        const double* d = g->second.data();
        for (std::size_t i = 0; i < t->size(); ++i) w[i] -= lr * d[i];
        ++g;
    }
}

double clip_global_norm(ParamSet& grads, double max_norm) {
    const double norm = std::sqrt(grads.squared_norm());
    if (max_norm > 0.0 && norm > max_norm) {
        const double s = max_norm / norm;
        for (auto& [name, g] : grads)
            for (double& v : g.values()) v *= s;
    }
    return norm;
}

GradCheckResult grad_check(const Objective& fn, const ParamView& params, double eps) {
    if (!(eps > 0.0 && eps <= 1e-2)) throw Error("grad_check: eps must lie in (0, 1e-2]");

    auto evaluate = [&fn]() {
        Tape tape;
        return tape.scalar(fn(tape));
    };

    ParamSet analytic;
    double base = 0.0;
    {
        Tape tape;
        Var loss = fn(tape);
        base = tape.scalar(loss);
        analytic = backward(tape, loss, params);
    }
    if (evaluate() != base) throw Error("grad_check: objective is not deterministic");

    GradCheckResult result;
    auto g = analytic.begin();
    for (const auto& [name, t] : params) {
        for (std::size_t i = 0; i < t->size(); ++i) {
            const double saved = (*t)[i];
            (*t)[i] = saved + eps;
            const double plus = evaluate();
            (*t)[i] = saved - eps;
            const double minus = evaluate();
            (*t)[i] = saved;

            const double numeric = (plus - minus) / (2.0 * eps);
            const double a = g->second[i];
            const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
            const double rel = std::abs(a - numeric) / denom;
            ++result.coordinates;
            if (rel > result.max_rel_error) {
                result.max_rel_error = rel;
                result.worst_param = name;
                result.worst_index = i;
                result.analytic = a;
                result.numeric = numeric;
            }
        }
        ++g;
    }
    return result;
}

}  // namespace emn
