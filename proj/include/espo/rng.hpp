#pragma once

#include <cstdint>
#include <cmath>

#include <Eigen/Core>

namespace espo {

/// Deterministic 64-bit generator (xorshift-multiply finalized splitmix64).
/// Used everywhere instead of std distributions so that identical seeds give
/// identical streams regardless of platform or standard-library version.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform integer in [0, n). Unbiased via rejection.
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t v = next_u64();
        while (v >= limit) v = next_u64();
        return v % n;
    }

    /// Exponential(1) variate.
    double exponential() { return -std::log1p(-uniform01()); }

    /// Index sampled from a probability vector (CDF inversion; the final
    /// index absorbs any rounding slack).
    template <typename Derived>
    int categorical(const Eigen::MatrixBase<Derived>& probs) {
        const double u = uniform01();
        double acc = 0.0;
        const int n = static_cast<int>(probs.size());
        for (int i = 0; i < n - 1; ++i) {
            acc += probs(i);
            if (u < acc) return i;
        }
        return n - 1;
    }

  private:
    std::uint64_t state_;
};

/// Derives an independent substream seed from (seed, stream index).
/// Substreams built this way are stable under any evaluation order.
inline std::uint64_t substream_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed ^ (0x94d049bb133111ebULL * (stream + 1));
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace espo
