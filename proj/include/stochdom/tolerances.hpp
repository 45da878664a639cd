#pragma once

#include <cstddef>

namespace stochdom {

/// Numerical thresholds shared across modules. Every report records the
/// values it ran with.
struct Tolerances {
  double stochastic = 1e-10;   // entry range and row-sum slack for stochastic matrices
  double gap = 1e-3;           // nats/step separating finite-time exponent blocks
  double log_floor = -40.0;    // running averages below this are reported as -inf
  double rank = 1e-12;         // relative singular value below which a direction is a kernel
  double merge = 1e-6;         // relative modulus distance merging periodic eigenvalues
  double invariance = 1e-8;    // subspace invariance defect accepted along an orbit
  double fixed_point = 1e-12;  // graph-transform stopping increment
  std::size_t max_fixed_point_iterations = 10000;
};

}  // namespace stochdom
