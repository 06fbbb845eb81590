#pragma once

#include <cmath>
#include <cstdint>

namespace selma {

// PCG-XSH-RR 64/32 (O'Neill 2014). 64-bit LCG state, 32-bit output, with the
// stream selector used to split one experiment seed into independent
// per-purpose streams. All randomness in the project flows through this
// generator so runs are bit-reproducible across platforms.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0) {
    state_ = 0;
    inc_ = (stream << 1u) | 1u;
    next_u32();
    state_ += seed;
    next_u32();
  }

  std::uint32_t next_u32() {
    std::uint64_t old = state_;
    state_ = old * 6364136223846793005ull + inc_;
    auto xorshifted = static_cast<std::uint32_t>(((old >> 18u) ^ old) >> 27u);
    auto rot = static_cast<std::uint32_t>(old >> 59u);
    return (xorshifted >> rot) | (xorshifted << ((32u - rot) & 31u));
  }

  std::uint64_t next_u64() {
    std::uint64_t hi = next_u32();
    return (hi << 32) | next_u32();
  }

  // Uniform in [0, 1) with 53 random bits.
  double next_double() {
    return static_cast<double>(next_u64() >> 11u) * 0x1.0p-53;
  }

  // Unbiased integer in [0, n). n must be positive.
  std::uint32_t bounded(std::uint32_t n) {
    std::uint32_t threshold = (-n) % n;
    for (;;) {
      std::uint32_t r = next_u32();
      if (r >= threshold) return r % n;
    }
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // Standard normal via Box-Muller. Two uniforms per draw, no cached spare,
  // so the consumption pattern is easy to reason about.
  double normal() {
    double u1 = 1.0 - next_double();  // (0, 1]
    double u2 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

 private:
  std::uint64_t state_;
  std::uint64_t inc_;
};

// Fixed stream ids. A purpose id is combined with an index (prompt id, suite
// entry, ...) so parallel work items get disjoint streams from one seed.
namespace streams {
inline constexpr std::uint64_t kInit = 1;
inline constexpr std::uint64_t kData = 2;
inline constexpr std::uint64_t kNoise = 3;
inline constexpr std::uint64_t kEval = 4;
inline constexpr std::uint64_t kPrompt = 5;
inline constexpr std::uint64_t kScene = 6;
inline constexpr std::uint64_t kMock = 7;
inline constexpr std::uint64_t kSample = 8;
}  // namespace streams

inline Rng make_rng(std::uint64_t seed, std::uint64_t purpose, std::uint64_t index = 0) {
  return Rng(seed, (purpose << 32) ^ index);
}

}  // namespace selma
