#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

namespace cica::rng {

inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

/// SplitMix64 finalizer. Bijective on 64-bit words, identical on every
/// platform, which is what makes seeded runs byte-reproducible.
inline constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

/// Derive an independent substream key from (seed, index). Used to hand each
/// Monte Carlo trial / column / shard its own stream so results do not depend
/// on scheduling order.
inline constexpr std::uint64_t derive(std::uint64_t seed, std::uint64_t index) {
  return mix64((seed + kGolden) ^ mix64(index * kGolden + 0x8C6E1D2F5A93B741ull));
}

/// Counter-based generator: output i is mix64(key + i*golden), i.e. SplitMix64.
/// No hidden state beyond the counter, so streams are trivially restartable.
class Counter {
 public:
  explicit Counter(std::uint64_t seed) : key_(seed) {}

  std::uint64_t next_u64() { return mix64(key_ + (++ctr_) * kGolden); }

  /// uniform double in (0, 1]
  double next_unit() {
    return double((next_u64() >> 11) + 1) * 0x1.0p-53;
  }

  /// uniform double in [a, b)
  double next_uniform(double a, double b) {
    const double u = double(next_u64() >> 11) * 0x1.0p-53;  // [0,1)
    return a + (b - a) * u;
  }

  /// uniform integer in [0, bound) without modulo bias
  std::uint64_t next_below(std::uint64_t bound) {
    const std::uint64_t limit = bound * ((~std::uint64_t{0}) / bound);
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return x % bound;
  }

  /// standard normal via Box-Muller (deterministic draw count: 2 uniforms per pair)
  double next_normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = next_unit();
    const double u2 = next_unit();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  /// Laplace(mu, b) via inverse CDF
  double next_laplace(double mu, double b) {
    const double u = next_uniform(-0.5, 0.5);
    const double s = u < 0.0 ? -1.0 : 1.0;
    return mu - b * s * std::log1p(-2.0 * std::abs(u));
  }

  /// Student's t with 3 degrees of freedom (normal over chi-square ratio)
  double next_student_t3() {
    const double z = next_normal();
    const double a = next_normal();
    const double b = next_normal();
    const double c = next_normal();
    const double chi2 = a * a + b * b + c * c;
    return z / std::sqrt(chi2 / 3.0);
  }

  /// random sign in {-1.0, +1.0}
  double next_sign() { return (next_u64() & 1u) ? 1.0 : -1.0; }

 private:
  std::uint64_t key_;
  std::uint64_t ctr_ = 0;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

/// First m entries of a seeded Fisher-Yates shuffle of {0,...,count-1}:
/// a uniformly random m-subset, sampled without replacement.
inline std::vector<std::uint32_t> sample_without_replacement(std::uint32_t count,
                                                             std::uint32_t m,
                                                             Counter& rng) {
  std::vector<std::uint32_t> idx(count);
  for (std::uint32_t i = 0; i < count; ++i) idx[i] = i;
  for (std::uint32_t i = 0; i < m; ++i) {
    const auto j = i + std::uint32_t(rng.next_below(count - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(m);
  return idx;
}

}  // namespace cica::rng
