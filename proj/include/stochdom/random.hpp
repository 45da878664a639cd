#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

#include <Eigen/Dense>

namespace stochdom {

/// Seeded generator with distributions written out explicitly, so that a
/// fixed seed reproduces identical draws across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Independent stream for task `stream` of a run seeded with `seed`.
  static Rng derive(std::uint64_t seed, std::uint64_t stream) {
    return Rng(splitmix(seed ^ splitmix(stream + 0x9E3779B97F4A7C15ULL)));
  }

  std::uint64_t next() { return engine_(); }

  /// Uniform on [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform on (0, 1].
  double uniform_open() { return 1.0 - uniform(); }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  std::size_t index(std::size_t n) {
    const unsigned __int128 wide = static_cast<unsigned __int128>(engine_()) * n;
    return static_cast<std::size_t>(wide >> 64);
  }

  double normal() {
    // Box-Muller, one value per call.
    const double r = std::sqrt(-2.0 * std::log(uniform_open()));
    return r * std::cos(2.0 * std::numbers::pi * uniform());
  }

  /// Flat Dirichlet(1,...,1) draw: a uniform point of the simplex.
  Eigen::VectorXd dirichlet(Eigen::Index n) {
    Eigen::VectorXd x(n);
    for (Eigen::Index i = 0; i < n; ++i) x[i] = -std::log(uniform_open());
    return x / x.sum();
  }

  Eigen::VectorXd gaussian(Eigen::Index n) {
    Eigen::VectorXd x(n);
    for (Eigen::Index i = 0; i < n; ++i) x[i] = normal();
    return x;
  }

  Eigen::VectorXd unit_vector(Eigen::Index n) {
    Eigen::VectorXd x = gaussian(n);
    while (x.norm() == 0.0) x = gaussian(n);
    return x.normalized();
  }

 private:
  static std::uint64_t splitmix(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::mt19937_64 engine_;
};

}  // namespace stochdom
