#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

#include "fedloc/errors.hpp"

namespace fedloc {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace detail

// Derives an independent child seed from a base seed and a tag path.
// The same (base, tags) pair always yields the same seed, and distinct
// tag paths yield streams that do not collide in practice.
inline std::uint64_t derive_seed(std::uint64_t base,
                                 std::initializer_list<std::uint64_t> tags) {
  std::uint64_t s = detail::splitmix64(base);
  for (std::uint64_t t : tags) {
    s = detail::splitmix64(s ^ detail::splitmix64(t));
  }
  return s;
}

// Seeded random stream with hand-pinned real-valued transforms so that
// sequences are identical across standard libraries and platforms.
// std::mt19937_64 output is specified by the standard; the normal and
// gamma transforms below avoid the implementation-defined
// std::*_distribution classes.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  // Uniform on (0, 1]; safe to take logs of.
  double uniform_positive() { return 1.0 - uniform(); }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Unbiased integer on [0, n) by rejection.
  std::size_t below(std::size_t n) {
    if (n == 0) throw ParameterError("Rng::below: n must be positive");
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t v;
    do {
      v = engine_();
    } while (v >= limit);
    return static_cast<std::size_t>(v % n);
  }

  // Standard normal via the Marsaglia polar method (one spare cached).
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double x, y, s;
    do {
      x = 2.0 * uniform() - 1.0;
      y = 2.0 * uniform() - 1.0;
      s = x * x + y * y;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = y * f;
    has_spare_ = true;
    return x * f;
  }

  // Gamma(shape, 1) via Marsaglia-Tsang; shapes below 1 use the
  // boost gamma(shape + 1) * u^(1/shape).
  double gamma(double shape) {
    if (!(shape > 0.0)) {
      throw ParameterError("Rng::gamma: shape must be positive");
    }
    if (shape < 1.0) {
      const double u = uniform_positive();
      return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x, v;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = uniform_positive();
      const double x2 = x * x;
      if (u < 1.0 - 0.0331 * x2 * x2) return d * v;
      if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

  // Dirichlet(beta) draw via normalized independent Gamma(beta_j, 1).
  Eigen::VectorXd dirichlet(const Eigen::VectorXd& beta) {
    if (beta.size() == 0) throw ParameterError("dirichlet: empty beta");
    Eigen::VectorXd g(beta.size());
    for (Eigen::Index j = 0; j < beta.size(); ++j) {
      if (!(beta[j] > 0.0)) {
        throw ParameterError("dirichlet: every concentration must be > 0");
      }
      g[j] = gamma(beta[j]);
    }
    const double total = g.sum();
    if (!std::isfinite(total) || total <= 0.0) {
      throw InvalidState("dirichlet: degenerate gamma draws");
    }
    return g / total;
  }

  // Fisher-Yates with the unbiased integer draw above.
  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[below(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace fedloc
