#pragma once

#include <cmath>
#include <cstdint>

#include "kinetic/types.hpp"

namespace kinetic {

// Counter-style deterministic random stream. All variates are derived from
// raw 64-bit outputs of a splitmix64-seeded xoshiro256**, so sequences are
// bit-reproducible across platforms for a given (seed, stream_id).
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed, std::uint64_t stream_id = 0) {
    std::uint64_t x = seed ^ (0x9e3779b97f4a7c15ULL * (stream_id + 1));
    for (auto& si : s_) si = splitmix64(x);
    have_cached_normal_ = false;
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in (0, 1]; safe under log().
  double uniform_pos() { return 1.0 - uniform(); }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller (explicit, stdlib-independent).
  double normal() {
    if (have_cached_normal_) {
      have_cached_normal_ = false;
      return cached_normal_;
    }
    const double r = std::sqrt(-2.0 * std::log(uniform_pos()));
    const double phi = 2.0 * M_PI * uniform();
    cached_normal_ = r * std::sin(phi);
    have_cached_normal_ = true;
    return r * std::cos(phi);
  }

  // Rayleigh(1): density s*exp(-s^2/2) on s > 0.
  double rayleigh() { return std::sqrt(-2.0 * std::log(uniform_pos())); }

  Vec3 normal3() { return Vec3(normal(), normal(), normal()); }

  Vec3 uniform_direction() {
    const double c = uniform(-1.0, 1.0);
    const double s = std::sqrt(std::max(0.0, 1.0 - c * c));
    const double phi = 2.0 * M_PI * uniform();
    return Vec3(s * std::cos(phi), s * std::sin(phi), c);
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  static std::uint64_t splitmix64(std::uint64_t& x) {
    x += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t s_[4];
  bool have_cached_normal_;
  double cached_normal_{0.0};
};

}  // namespace kinetic
