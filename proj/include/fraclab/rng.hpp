#pragma once

#include <cmath>
#include <cstdint>

namespace fraclab {

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}
}  // namespace detail

/// xoshiro256++ with hand-rolled distributions, so streams are bit-identical
/// across platforms and thread counts.  Replica streams are derived from
/// (seed, replica) via splitmix64.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    std::uint64_t sm = seed;
    for (auto& w : s_) w = detail::splitmix64(sm);
  }

  static Rng for_replica(std::uint64_t seed, std::uint64_t replica) {
    std::uint64_t sm = seed ^ (0x9e3779b97f4a7c15ull * (replica + 1));
    return Rng(detail::splitmix64(sm));
  }

  std::uint64_t next() {
    const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  /// uniform in (0,1), never exactly 0 or 1
  double uniform() {
    return (double(next() >> 11) + 0.5) * 0x1.0p-53;
  }

  double uniform(double a, double b) { return a + (b - a) * uniform(); }

  double exponential() { return -std::log(uniform()); }

  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u, v, q;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      q = u * u + v * v;
    } while (q >= 1.0 || q == 0.0);
    const double f = std::sqrt(-2.0 * std::log(q) / q);
    spare_ = v * f;
    have_spare_ = true;
    return u * f;
  }

  /// Poisson via inversion (small means) / PTRS-free normal fallback is not
  /// needed here: means stay modest in this codebase.
  long poisson(double mean) {
    if (mean <= 0.0) return 0;
    if (mean < 60.0) {
      const double L = std::exp(-mean);
      long k = 0;
      double p = 1.0;
      do {
        ++k;
        p *= uniform();
      } while (p > L);
      return k - 1;
    }
    // split recursively; exact (sum of independent Poissons)
    const long half = poisson(mean / 2);
    return half + poisson(mean - mean / 2);
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }
  std::uint64_t s_[4] = {};
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace fraclab
