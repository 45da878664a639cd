#pragma once

// Invertible ergodic base maps driving a cocycle: circle rotations, hyperbolic
// toral automorphisms and finite cycles.

#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "error.hpp"
#include "random.hpp"

namespace stochdom {

struct CircleRotation {
  double alpha = 0.6180339887498949;  // golden ratio fractional part
};

struct TorusAutomorphism {
  std::array<std::array<std::int64_t, 2>, 2> matrix{{{2, 1}, {1, 1}}};
};

/// x -> x + shift mod q. A single q-cycle when gcd(shift, q) = 1.
struct FiniteCycle {
  std::size_t q = 1;
  std::size_t shift = 1;
};

using TorusPoint = std::array<double, 2>;
/// Circle point in [0,1), torus point in [0,1)^2, or cycle index.
using BasePoint = std::variant<double, TorusPoint, std::size_t>;

namespace detail {
inline double wrap_unit(double x) {
  double r = x - std::floor(x);
  return r >= 1.0 ? 0.0 : r;
}
}  // namespace detail

class BaseSystem {
 public:
  using Variant = std::variant<CircleRotation, TorusAutomorphism, FiniteCycle>;

  BaseSystem() : BaseSystem(FiniteCycle{}) {}

  BaseSystem(CircleRotation r) : BaseSystem(Variant(r)) {}     // NOLINT(google-explicit-constructor)
  BaseSystem(TorusAutomorphism t) : BaseSystem(Variant(t)) {}  // NOLINT(google-explicit-constructor)
  BaseSystem(FiniteCycle c) : BaseSystem(Variant(c)) {}        // NOLINT(google-explicit-constructor)

  explicit BaseSystem(Variant v) : v_(v) {
    if (auto* r = std::get_if<CircleRotation>(&v_)) {
      require(std::isfinite(r->alpha), "invalid_base", "rotation angle must be finite");
      r->alpha = detail::wrap_unit(r->alpha);
    } else if (auto* t = std::get_if<TorusAutomorphism>(&v_)) {
      const auto& m = t->matrix;
      const std::int64_t det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
      require(det == 1 || det == -1, "invalid_base",
              "torus automorphism needs determinant +-1, got " + std::to_string(det));
    } else {
      const auto& c = std::get<FiniteCycle>(v_);
      require(c.q >= 1, "invalid_base", "cycle length must be >= 1");
      require(std::gcd(c.shift % c.q, c.q) == 1 || c.q == 1, "invalid_base",
              "cycle shift must be coprime to q");
    }
  }

  const Variant& variant() const { return v_; }

  /// Period when the base is a finite cycle.
  std::optional<std::size_t> period() const {
    if (const auto* c = std::get_if<FiniteCycle>(&v_)) return c->q;
    return std::nullopt;
  }

  BasePoint origin() const {
    if (std::holds_alternative<CircleRotation>(v_)) return 0.0;
    if (std::holds_alternative<TorusAutomorphism>(v_)) return TorusPoint{0.0, 0.0};
    return std::size_t{0};
  }

  void validate(const BasePoint& x) const {
    auto in_unit = [](double a) { return std::isfinite(a) && a >= 0.0 && a < 1.0; };
    if (std::holds_alternative<CircleRotation>(v_)) {
      const auto* p = std::get_if<double>(&x);
      require(p && in_unit(*p), "invalid_point", "circle point must be a number in [0,1)");
    } else if (std::holds_alternative<TorusAutomorphism>(v_)) {
      const auto* p = std::get_if<TorusPoint>(&x);
      require(p && in_unit((*p)[0]) && in_unit((*p)[1]), "invalid_point",
              "torus point must lie in [0,1)^2");
    } else {
      const auto* p = std::get_if<std::size_t>(&x);
      require(p && *p < std::get<FiniteCycle>(v_).q, "invalid_point",
              "cycle point must be an index below q");
    }
  }

  BasePoint forward(const BasePoint& x) const { return step(x, false); }
  BasePoint backward(const BasePoint& x) const { return step(x, true); }

  BasePoint advance(BasePoint x, std::size_t k) const {
    for (std::size_t i = 0; i < k; ++i) x = forward(x);
    return x;
  }

  BasePoint retreat(BasePoint x, std::size_t k) const {
    for (std::size_t i = 0; i < k; ++i) x = backward(x);
    return x;
  }

  /// The base system driven by f^{-1}.
  BaseSystem inverse() const {
    if (const auto* r = std::get_if<CircleRotation>(&v_)) return CircleRotation{1.0 - r->alpha};
    if (const auto* t = std::get_if<TorusAutomorphism>(&v_)) {
      const auto& m = t->matrix;
      const std::int64_t det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
      TorusAutomorphism inv;
      inv.matrix = {{{det * m[1][1], -det * m[0][1]}, {-det * m[1][0], det * m[0][0]}}};
      return inv;
    }
    const auto& c = std::get<FiniteCycle>(v_);
    return FiniteCycle{c.q, c.q == 1 ? 1 : c.q - c.shift % c.q};
  }

  /// i.i.d. samples of the invariant measure (Lebesgue, Haar, or uniform).
  std::vector<BasePoint> sample_mu(Rng& rng, std::size_t count) const {
    require(count >= 1, "invalid_count", "sample_mu needs count >= 1");
    std::vector<BasePoint> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
      if (std::holds_alternative<CircleRotation>(v_)) {
        out.emplace_back(rng.uniform());
      } else if (std::holds_alternative<TorusAutomorphism>(v_)) {
        const double a = rng.uniform();
        out.emplace_back(TorusPoint{a, rng.uniform()});
      } else {
        out.emplace_back(rng.index(std::get<FiniteCycle>(v_).q));
      }
    }
    return out;
  }

 private:
  BasePoint step(const BasePoint& x, bool backwards) const {
    validate(x);
    if (const auto* r = std::get_if<CircleRotation>(&v_)) {
      const double a = std::get<double>(x);
      return detail::wrap_unit(backwards ? a - r->alpha : a + r->alpha);
    }
    if (const auto* t = std::get_if<TorusAutomorphism>(&v_)) {
      const auto& p = std::get<TorusPoint>(x);
      auto m = t->matrix;
      if (backwards) m = std::get<TorusAutomorphism>(inverse().v_).matrix;
      return TorusPoint{
          detail::wrap_unit(static_cast<double>(m[0][0]) * p[0] + static_cast<double>(m[0][1]) * p[1]),
          detail::wrap_unit(static_cast<double>(m[1][0]) * p[0] + static_cast<double>(m[1][1]) * p[1])};
    }
    const auto& c = std::get<FiniteCycle>(v_);
    const std::size_t k = std::get<std::size_t>(x);
    const std::size_t s = c.shift % c.q;
    return backwards ? (k + c.q - s) % c.q : (k + s) % c.q;
  }

  Variant v_;
};

/// Scalar position used by circle-indexed generators: the circle coordinate,
/// the first torus coordinate, or k/q on a cycle.
inline double coordinate(const BasePoint& x, const BaseSystem& base) {
  if (const auto* a = std::get_if<double>(&x)) return *a;
  if (const auto* t = std::get_if<TorusPoint>(&x)) return (*t)[0];
  const auto q = base.period().value_or(1);
  return static_cast<double>(std::get<std::size_t>(x)) / static_cast<double>(q);
}

struct OrbitSegment {
  std::vector<BasePoint> points;

  const BasePoint& origin() const { return points.front(); }
  std::size_t length() const { return points.size(); }
};

inline OrbitSegment orbit(const BaseSystem& base, const BasePoint& x, std::size_t length) {
  require(length >= 1, "invalid_length", "orbit length must be >= 1");
  base.validate(x);
  OrbitSegment seg;
  seg.points.reserve(length);
  seg.points.push_back(x);
  for (std::size_t i = 1; i < length; ++i) seg.points.push_back(base.forward(seg.points.back()));
  return seg;
}

/// True when the segment is a full periodic orbit of a finite cycle, so that
/// f(last) == first.
inline bool closes(const BaseSystem& base, const OrbitSegment& seg) {
  const auto q = base.period();
  return q && seg.length() == *q && base.forward(seg.points.back()) == seg.points.front();
}

inline std::string describe(const BasePoint& x) {
  if (const auto* a = std::get_if<double>(&x)) return std::to_string(*a);
  if (const auto* t = std::get_if<TorusPoint>(&x))
    return "(" + std::to_string((*t)[0]) + ", " + std::to_string((*t)[1]) + ")";
  return std::to_string(std::get<std::size_t>(x));
}

}  // namespace stochdom
