#pragma once

#include <cmath>
#include <cstdint>

namespace iat {

// Deterministic generator used everywhere the library needs randomness.
// splitmix64 core with Box-Muller normals; self-contained so results are
// identical across standard library implementations within one build.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1) with 24 bits of mantissa.
  float uniform() { return static_cast<float>(next_u64() >> 40) * 0x1.0p-24f; }

  float uniform(float lo, float hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller; caches the second draw of each pair.
  float normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    float u1 = uniform();
    float u2 = uniform();
    if (u1 < 1e-12f) u1 = 1e-12f;
    const float r = std::sqrt(-2.0f * std::log(u1));
    const float a = 6.28318530717958647692f * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  // Fisher-Yates index for shuffling: uniform integer in [0, n).
  std::size_t below(std::size_t n) { return static_cast<std::size_t>(next_u64() % n); }

 private:
  std::uint64_t state_;
  bool have_spare_ = false;
  float spare_ = 0.0f;
};

// Derives independent streams from one root seed so that unrelated consumers
// (weight init, shuffling, attack noise, bank init, ...) never interact.
// Adding or removing draws in one stream cannot shift any other stream.
inline std::uint64_t mix_seed(std::uint64_t a) {
  std::uint64_t z = a + 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  return mix_seed(a ^ mix_seed(b));
}

template <typename... Rest>
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c, Rest... rest) {
  return mix_seed(mix_seed(a, b), c, rest...);
}

// Stream tags for mix_seed. Distinct constants per purpose.
namespace streams {
inline constexpr std::uint64_t kModelInit = 0x01;
inline constexpr std::uint64_t kBankInit = 0x02;
inline constexpr std::uint64_t kShuffle = 0x03;
inline constexpr std::uint64_t kAttack = 0x04;
inline constexpr std::uint64_t kInverse = 0x05;
inline constexpr std::uint64_t kEval = 0x06;
}  // namespace streams

}  // namespace iat
