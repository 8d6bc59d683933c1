#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>

namespace ouk {

// Small deterministic generator built on splitmix64.  Unlike the standard
// distributions, every transform here is spelled out, so streams are
// bit-reproducible across compilers and platforms.  Parallel / per-item
// streams are derived with fork(), which hashes (seed, stream) rather than
// sharing mutable state.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed ^ 0x9e3779b97f4a7c15ull) {}

  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Independent stream for item `stream` under master `seed`.
  static Rng fork(std::uint64_t seed, std::uint64_t stream) {
    return Rng(mix(seed) ^ mix(stream * 0xda942042e4dd58b5ull + 0x2545f4914f6cdd1dull));
  }

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1) with 53 random bits.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in (0, 1] (safe as a log argument).
  double next_double_pos() { return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53; }

  // Standard normal via Box-Muller; one spare value is cached.
  double next_normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = next_double_pos();
    const double u2 = next_double();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  Eigen::VectorXd normal_vector(int n) {
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v[i] = next_normal();
    return v;
  }

  // Uniformly distributed direction on the unit sphere.
  Eigen::VectorXd unit_vector(int n) {
    while (true) {
      Eigen::VectorXd v = normal_vector(n);
      const double r = v.norm();
      if (r > 1e-12) return v / r;
    }
  }

 private:
  std::uint64_t state_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// Van der Corput radical inverse; bases 2,3,5,... give a Halton stream used
// for low-discrepancy candidate points.
inline double radical_inverse(std::uint64_t index, unsigned base) {
  double inv_base = 1.0 / static_cast<double>(base);
  double f = inv_base;
  double r = 0.0;
  while (index > 0) {
    r += f * static_cast<double>(index % base);
    index /= base;
    f *= inv_base;
  }
  return r;
}

inline Eigen::VectorXd halton_point(std::uint64_t index, int dim) {
  static const unsigned primes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53};
  Eigen::VectorXd p(dim);
  for (int d = 0; d < dim; ++d) p[d] = radical_inverse(index, primes[d]);
  return p;
}

}  // namespace ouk
