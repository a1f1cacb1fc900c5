#include "emn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

namespace emn {

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
    std::size_t n = 1;
    for (std::size_t extent : shape_) {
        if (extent == 0) throw DimensionError("tensor extents must be positive, got " + shape_string());
        n *= extent;
    }
    if (shape_.empty() || shape_.size() > 2)
        throw DimensionError("tensor rank must be 1 or 2");
    if (n != values_.size())
        throw DimensionError("tensor of shape " + shape_string() + " given " +
                             std::to_string(values_.size()) + " values");
    require_finite("tensor construction");
}

Tensor Tensor::zeros(std::size_t n) { return Tensor({n}, std::vector<double>(n, 0.0)); }

Tensor Tensor::zeros(std::size_t rows, std::size_t cols) {
    return Tensor({rows, cols}, std::vector<double>(rows * cols, 0.0));
}

Tensor Tensor::filled(std::size_t n, double value) { return Tensor({n}, std::vector<double>(n, value)); }

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

Tensor Tensor::from(std::vector<double> values) {
    const std::size_t n = values.size();
    return Tensor({n}, std::move(values));
}

Tensor Tensor::from(std::size_t rows, std::size_t cols, std::vector<double> values) {
    return Tensor({rows, cols}, std::move(values));
}

Tensor Tensor::identity(std::size_t n) {
    Tensor t = zeros(n, n);
    for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
    return t;
}

Tensor Tensor::row(std::size_t r) const {
    if (!is_matrix() || r >= rows())
        throw DimensionError("row " + std::to_string(r) + " out of range for " + shape_string());
    const std::size_t n = cols();
    return from(std::vector<double>(values_.begin() + static_cast<std::ptrdiff_t>(r * n),
                                    values_.begin() + static_cast<std::ptrdiff_t>((r + 1) * n)));
}

std::string Tensor::shape_string() const {
    std::string s = "[";
    for (std::size_t i = 0; i < shape_.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(shape_[i]);
    }
    return s + "]";
}

void Tensor::require_finite(const char* what) const {
    for (double v : values_) {
        if (!std::isfinite(v)) throw NumericError(std::string("non-finite value in ") + what);
    }
}

double dot(const Tensor& a, const Tensor& b) {
    if (a.size() != b.size())
        throw DimensionError("dot of " + a.shape_string() + " and " + b.shape_string());
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double l2_norm(const Tensor& a) { return std::sqrt(dot(a, a)); }

double squared_distance(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b))
        throw DimensionError("distance between " + a.shape_string() + " and " + b.shape_string());
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b))
        throw DimensionError("comparing " + a.shape_string() + " with " + b.shape_string());
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace emn
