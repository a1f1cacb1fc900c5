#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <utility>
#include <vector>

#include "emn/tensor.hpp"

namespace emn {

/// Seedable generator whose draws are identical on every platform.
///
/// The standard distributions are implementation-defined, so uniform reals,
/// bounded integers and shuffles are derived directly from the engine bits.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    /// Uniform in [lo, hi).
    double uniform(double lo, double hi) {
        const double unit = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
        return lo + (hi - lo) * unit;
    }

    /// Uniform in [0, n); n must be positive.
    std::size_t index(std::size_t n) {
        const std::uint64_t bound = static_cast<std::uint64_t>(n);
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
        std::uint64_t x = engine_();
        while (x >= limit) x = engine_();
        return static_cast<std::size_t>(x % bound);
    }

    template <class T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            const std::size_t j = index(i);
            using std::swap;
            swap(items[i - 1], items[j]);
        }
    }

    Tensor uniform_vector(std::size_t n, double lo, double hi);
    Tensor uniform_matrix(std::size_t rows, std::size_t cols, double lo, double hi);

private:
    std::mt19937_64 engine_;
};

/// Half-width of the symmetric uniform parameter initialisation.
inline constexpr double kInitScale = 0.08;

/// Stable 64-bit FNV-1a hash, used to derive per-token seeds.
std::uint64_t fnv1a(std::string_view text);

}  // namespace emn
