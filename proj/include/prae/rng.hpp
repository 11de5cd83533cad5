#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace prae {

// Counter-based generator in the SplitMix64 family: the k-th output is a hash
// of (seed, stream, k), so streams can be split arbitrarily and a draw never
// depends on how many values other streams consumed. Deterministic given
// (seed, stream).
class CounterRng {
  public:
    explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0)
        : base_(derive_base(seed, stream)), counter_(0) {}

    std::uint64_t next_u64() {
        std::uint64_t z = base_ + (++counter_) * 0x9E3779B97F4A7C15ULL;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Uniform on the open interval (0,1); never returns 0 or 1.
    double next_uniform() {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

    // Standard normal via Box-Muller. Two uniforms per draw, no cached state.
    double next_normal() {
        const double u1 = next_uniform();
        const double u2 = next_uniform();
        return std::sqrt(-2.0 * std::log(u1)) *
               std::cos(2.0 * std::numbers::pi * u2);
    }

    // Uniform integer in [0, n).
    std::uint64_t next_below(std::uint64_t n) { return next_u64() % n; }

    std::uint64_t counter() const { return counter_; }

  private:
    static std::uint64_t derive_base(std::uint64_t seed, std::uint64_t stream) {
        std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        z ^= z >> 31;
        // Fold the stream id in with a second mixing round so adjacent
        // streams are uncorrelated.
        std::uint64_t s = stream * 0xD6E8FEB86659FD93ULL + 0xA5A5A5A5A5A5A5A5ULL;
        s = (s ^ (s >> 29)) * 0xFF51AFD7ED558CCDULL;
        return z ^ s;
    }

    std::uint64_t base_;
    std::uint64_t counter_;
};

}  // namespace prae
