#include "emn/rng.hpp"

namespace emn {

Tensor Rng::uniform_vector(std::size_t n, double lo, double hi) {
    std::vector<double> v(n);
    for (double& x : v) x = uniform(lo, hi);
    return Tensor::from(std::move(v));
}

Tensor Rng::uniform_matrix(std::size_t rows, std::size_t cols, double lo, double hi) {
    std::vector<double> v(rows * cols);
    for (double& x : v) x = uniform(lo, hi);
    return Tensor::from(rows, cols, std::move(v));
}

std::uint64_t fnv1a(std::string_view text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace emn
