#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace emn {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Operand shapes do not fit the operation.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// A NaN or infinity appeared where only finite values are allowed.
class NumericError : public Error {
public:
    using Error::Error;
};

/// Dense row-major array of doubles with rank 1 (vector) or rank 2 (matrix).
///
/// A default-constructed tensor is empty and only serves as a placeholder;
/// every tensor produced by a factory has positive extents and finite values.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(std::size_t n);
    static Tensor zeros(std::size_t rows, std::size_t cols);
    static Tensor filled(std::size_t n, double value);
    static Tensor scalar(double value);
    static Tensor from(std::vector<double> values);
    static Tensor from(std::size_t rows, std::size_t cols, std::vector<double> values);
    static Tensor identity(std::size_t n);

    std::size_t rank() const { return shape_.size(); }
    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t size() const { return values_.size(); }
    bool empty() const { return values_.empty(); }

    /// Leading extent; for a vector this is its length.
    std::size_t rows() const { return shape_.empty() ? 0 : shape_[0]; }
    /// Trailing extent; 1 for a vector.
    std::size_t cols() const { return shape_.size() == 2 ? shape_[1] : 1; }

    bool is_vector() const { return shape_.size() == 1; }
    bool is_matrix() const { return shape_.size() == 2; }
    bool is_scalar() const { return shape_.size() == 1 && shape_[0] == 1; }
    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    double operator[](std::size_t i) const { return values_[i]; }
    double& operator[](std::size_t i) { return values_[i]; }
    double operator()(std::size_t r, std::size_t c) const { return values_[r * cols() + c]; }
    double& operator()(std::size_t r, std::size_t c) { return values_[r * cols() + c]; }

    std::span<const double> values() const { return values_; }
    std::span<double> values() { return values_; }
    const double* data() const { return values_.data(); }
    double* data() { return values_.data(); }

    /// Copy of row r of a matrix as a vector.
    Tensor row(std::size_t r) const;

    /// "[3]" or "[2x4]".
    std::string shape_string() const;

    /// Throws NumericError naming `what` if any value is NaN or infinite.
    void require_finite(const char* what) const;

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    Tensor(std::vector<std::size_t> shape, std::vector<double> values);

    std::vector<std::size_t> shape_;
    std::vector<double> values_;
};

double dot(const Tensor& a, const Tensor& b);
double l2_norm(const Tensor& a);
double squared_distance(const Tensor& a, const Tensor& b);
double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace emn
