#pragma once

// JSON readers and writers for specs, partition families and reports. Readers
// reject unknown keys; writers are deterministic.

#include <charconv>
#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "accessibility.hpp"
#include "perturbation.hpp"
#include "transfer_operator.hpp"

namespace stochdom {

using Json = nlohmann::ordered_json;

/// Shortest round-trip decimal with '.' separator; inf/nan spelled out.
inline std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

inline Json number(double x) {
  if (std::isfinite(x)) return x;
  return format_double(x);
}

namespace detail {

inline void check_keys(const Json& j, const std::set<std::string>& allowed, const std::string& where) {
  require(j.is_object(), "invalid_config", where + " must be an object");
  for (const auto& [key, _] : j.items())
    if (!allowed.count(key)) fail_validation("unknown_field", "unknown field '" + key + "' in " + where);
}

inline const Json& field(const Json& j, const std::string& key, const std::string& where) {
  if (!j.contains(key)) fail_validation("missing_field", where + " needs '" + key + "'");
  return j.at(key);
}

inline double as_double(const Json& j, const std::string& what) {
  require(j.is_number(), "invalid_config", what + " must be a number");
  return j.get<double>();
}

inline std::uint64_t as_uint(const Json& j, const std::string& what) {
  require(j.is_number_unsigned() || (j.is_number_integer() && j.get<std::int64_t>() >= 0), "invalid_config",
          what + " must be a non-negative integer");
  return j.get<std::uint64_t>();
}

inline std::string as_string(const Json& j, const std::string& what) {
  require(j.is_string(), "invalid_config", what + " must be a string");
  return j.get<std::string>();
}

inline std::vector<double> as_doubles(const Json& j, const std::string& what) {
  require(j.is_array(), "invalid_config", what + " must be an array of numbers");
  std::vector<double> out;
  for (const auto& e : j) out.push_back(as_double(e, what));
  return out;
}

}  // namespace detail

inline Matrix matrix_from_json(const Json& j, const std::string& what) {
  require(j.is_array() && !j.empty(), "invalid_config", what + " must be a non-empty array of rows");
  const auto rows = static_cast<Index>(j.size());
  require(j.front().is_array() && !j.front().empty(), "invalid_config", what + " rows must be arrays");
  const auto cols = static_cast<Index>(j.front().size());
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    const auto& row = j[static_cast<std::size_t>(i)];
    require(row.is_array() && static_cast<Index>(row.size()) == cols, "invalid_config", what + " is ragged");
    for (Index k = 0; k < cols; ++k) m(i, k) = detail::as_double(row[static_cast<std::size_t>(k)], what);
  }
  return m;
}

inline Json matrix_to_json(const Matrix& m) {
  Json out = Json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Index k = 0; k < m.cols(); ++k) row.push_back(number(m(i, k)));
    out.push_back(std::move(row));
  }
  return out;
}

inline Json vector_to_json(const Vector& v) {
  Json out = Json::array();
  for (Index i = 0; i < v.size(); ++i) out.push_back(number(v[i]));
  return out;
}

inline Json doubles_to_json(const std::vector<double>& v) {
  Json out = Json::array();
  for (double x : v) out.push_back(number(x));
  return out;
}

// ---- base systems and points

inline BaseSystem base_from_json(const Json& j) {
  const std::string type = detail::as_string(detail::field(j, "type", "base"), "base.type");
  if (type == "rotation") {
    detail::check_keys(j, {"type", "alpha"}, "base");
    CircleRotation r;
    if (j.contains("alpha")) r.alpha = detail::as_double(j["alpha"], "base.alpha");
    return r;
  }
  if (type == "torus") {
    detail::check_keys(j, {"type", "matrix"}, "base");
    TorusAutomorphism t;
    if (j.contains("matrix")) {
      const Matrix m = matrix_from_json(j["matrix"], "base.matrix");
      require(m.rows() == 2 && m.cols() == 2, "invalid_base", "torus matrix must be 2x2");
      for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) {
          require(m(a, b) == std::round(m(a, b)), "invalid_base", "torus matrix must be integral");
          t.matrix[a][b] = static_cast<std::int64_t>(m(a, b));
        }
    }
    return t;
  }
  if (type == "cycle") {
    detail::check_keys(j, {"type", "q", "shift"}, "base");
    FiniteCycle c;
    c.q = detail::as_uint(detail::field(j, "q", "cycle base"), "base.q");
    c.shift = j.contains("shift") ? detail::as_uint(j["shift"], "base.shift") : (c.q == 1 ? 0 : 1);
    return c;
  }
  fail_validation("invalid_base", "unknown base type '" + type + "'");
}

inline Json base_to_json(const BaseSystem& b) {
  Json out;
  if (const auto* r = std::get_if<CircleRotation>(&b.variant())) {
    out["type"] = "rotation";
    out["alpha"] = r->alpha;
  } else if (const auto* t = std::get_if<TorusAutomorphism>(&b.variant())) {
    out["type"] = "torus";
    out["matrix"] = {{t->matrix[0][0], t->matrix[0][1]}, {t->matrix[1][0], t->matrix[1][1]}};
  } else {
    const auto& c = std::get<FiniteCycle>(b.variant());
    out["type"] = "cycle";
    out["q"] = c.q;
    out["shift"] = c.shift;
  }
  return out;
}

inline BasePoint point_from_json(const Json& j, const BaseSystem& b) {
  BasePoint x;
  if (std::holds_alternative<CircleRotation>(b.variant())) x = detail::as_double(j, "point");
  else if (std::holds_alternative<TorusAutomorphism>(b.variant())) {
    const auto v = detail::as_doubles(j, "point");
    require(v.size() == 2, "invalid_point", "torus point needs two coordinates");
    x = TorusPoint{v[0], v[1]};
  } else {
    x = static_cast<std::size_t>(detail::as_uint(j, "point"));
  }
  b.validate(x);
  return x;
}

inline Json point_to_json(const BasePoint& x) {
  if (const auto* a = std::get_if<double>(&x)) return *a;
  if (const auto* t = std::get_if<TorusPoint>(&x)) return Json::array({(*t)[0], (*t)[1]});
  return std::get<std::size_t>(x);
}

// ---- cocycle specs

namespace detail {

inline std::vector<StochasticMatrix> stochastic_list(const Json& j, const std::string& what, double tol) {
  require(j.is_array() && !j.empty(), "invalid_config", what + " must be a non-empty array of matrices");
  std::vector<StochasticMatrix> out;
  for (const auto& m : j) out.push_back(StochasticMatrix::from(matrix_from_json(m, what), tol));
  return out;
}

inline Json stochastic_list_to_json(const std::vector<StochasticMatrix>& ms) {
  Json out = Json::array();
  for (const auto& m : ms) out.push_back(matrix_to_json(m.matrix()));
  return out;
}

}  // namespace detail

inline Tolerances tolerances_from_json(const Json& j, Tolerances tol = {}) {
  detail::check_keys(j, {"stochastic", "gap", "log_floor", "rank", "merge", "invariance", "fixed_point",
                         "max_fixed_point_iterations"},
                     "tolerances");
  auto take = [&](const char* key, double& dst) {
    if (j.contains(key)) dst = detail::as_double(j[key], std::string("tolerances.") + key);
  };
  take("stochastic", tol.stochastic);
  take("gap", tol.gap);
  take("log_floor", tol.log_floor);
  take("rank", tol.rank);
  take("merge", tol.merge);
  take("invariance", tol.invariance);
  take("fixed_point", tol.fixed_point);
  if (j.contains("max_fixed_point_iterations"))
    tol.max_fixed_point_iterations = detail::as_uint(j["max_fixed_point_iterations"], "max_fixed_point_iterations");
  require(tol.stochastic > 0 && tol.gap > 0 && tol.rank > 0 && tol.merge > 0 && tol.invariance > 0 &&
              tol.fixed_point > 0 && tol.log_floor < 0,
          "invalid_tolerance", "tolerances must be positive (log_floor negative)");
  return tol;
}

inline Json tolerances_to_json(const Tolerances& t) {
  Json out;
  out["stochastic"] = t.stochastic;
  out["gap"] = t.gap;
  out["log_floor"] = t.log_floor;
  out["rank"] = t.rank;
  out["merge"] = t.merge;
  out["invariance"] = t.invariance;
  out["fixed_point"] = t.fixed_point;
  out["max_fixed_point_iterations"] = t.max_fixed_point_iterations;
  return out;
}

/// {"base": {...}, "generator": {"type": "tabulated"|"locally_constant"|"interpolated", ...}}
inline CocycleSpec spec_from_json(const Json& j, const Tolerances& tol = {}) {
  detail::check_keys(j, {"base", "generator"}, "spec");
  BaseSystem base = base_from_json(detail::field(j, "base", "spec"));
  const Json& g = detail::field(j, "generator", "spec");
  const std::string type = detail::as_string(detail::field(g, "type", "generator"), "generator.type");
  if (type == "tabulated") {
    detail::check_keys(g, {"type", "matrices"}, "generator");
    return {base, Tabulated{detail::stochastic_list(detail::field(g, "matrices", "generator"), "matrices", tol.stochastic)},
            tol};
  }
  if (type == "locally_constant") {
    detail::check_keys(g, {"type", "breakpoints", "matrices"}, "generator");
    return {base,
            LocallyConstant{detail::as_doubles(detail::field(g, "breakpoints", "generator"), "breakpoints"),
                            detail::stochastic_list(detail::field(g, "matrices", "generator"), "matrices", tol.stochastic)},
            tol};
  }
  if (type == "interpolated") {
    detail::check_keys(g, {"type", "anchors", "matrices"}, "generator");
    return {base,
            Interpolated{detail::as_doubles(detail::field(g, "anchors", "generator"), "anchors"),
                         detail::stochastic_list(detail::field(g, "matrices", "generator"), "matrices", tol.stochastic)},
            tol};
  }
  fail_validation("invalid_generator", "unknown generator type '" + type + "'");
}

inline Json spec_to_json(const CocycleSpec& c) {
  Json out;
  out["base"] = base_to_json(c.base());
  Json g;
  if (const auto* t = std::get_if<Tabulated>(&c.generator())) {
    g["type"] = "tabulated";
    g["matrices"] = detail::stochastic_list_to_json(t->matrices);
  } else if (const auto* lc = std::get_if<LocallyConstant>(&c.generator())) {
    g["type"] = "locally_constant";
    g["breakpoints"] = lc->breakpoints;
    g["matrices"] = detail::stochastic_list_to_json(lc->matrices);
  } else if (const auto* ip = std::get_if<Interpolated>(&c.generator())) {
    g["type"] = "interpolated";
    g["anchors"] = ip->anchors;
    g["matrices"] = detail::stochastic_list_to_json(ip->matrices);
  } else {
    fail_validation("not_serializable", "functional generators have no JSON form");
  }
  out["generator"] = std::move(g);
  return out;
}

// ---- partition families

/// {"base": {...}, "n": k, "floor": f, "ell": {"type": "constant"|"tabulated"|"interpolated", ...}}
inline PartitionFamily partition_from_json(const Json& j) {
  detail::check_keys(j, {"base", "n", "floor", "ell"}, "partition");
  const BaseSystem base = j.contains("base") ? base_from_json(j["base"]) : BaseSystem(CircleRotation{});
  const auto n = static_cast<Index>(detail::as_uint(detail::field(j, "n", "partition"), "partition.n"));
  const double floor = j.contains("floor") ? detail::as_double(j["floor"], "partition.floor") : kEllFloor;
  const Json& e = detail::field(j, "ell", "partition");
  const std::string type = detail::as_string(detail::field(e, "type", "ell"), "ell.type");
  auto list = [&](const Json& ms) {
    require(ms.is_array() && !ms.empty(), "invalid_config", "ell.matrices must be a non-empty array");
    std::vector<Matrix> out;
    for (const auto& m : ms) out.push_back(matrix_from_json(m, "ell.matrices"));
    return out;
  };
  if (type == "constant") {
    detail::check_keys(e, {"type", "value", "matrix"}, "ell");
    require(e.contains("value") != e.contains("matrix"), "invalid_config",
            "constant ell needs exactly one of 'value' or 'matrix'");
    Matrix m = e.contains("value") ? Matrix(Matrix::Constant(n, n, detail::as_double(e["value"], "ell.value")))
                                   : matrix_from_json(e["matrix"], "ell.matrix");
    return {base, n, EllConstant{m}, floor};
  }
  if (type == "tabulated") {
    detail::check_keys(e, {"type", "matrices"}, "ell");
    return {base, n, EllTabulated{list(detail::field(e, "matrices", "ell"))}, floor};
  }
  if (type == "interpolated") {
    detail::check_keys(e, {"type", "anchors", "matrices"}, "ell");
    return {base, n,
            EllInterpolated{detail::as_doubles(detail::field(e, "anchors", "ell"), "ell.anchors"),
                            list(detail::field(e, "matrices", "ell"))},
            floor};
  }
  fail_validation("invalid_partition", "unknown ell type '" + type + "'");
}

inline Json partition_to_json(const PartitionFamily& pf) {
  Json out;
  out["base"] = base_to_json(pf.base());
  out["n"] = pf.n();
  out["floor"] = pf.floor();
  Json e;
  auto list = [](const std::vector<Matrix>& ms) {
    Json a = Json::array();
    for (const auto& m : ms) a.push_back(matrix_to_json(m));
    return a;
  };
  if (const auto* c = std::get_if<EllConstant>(&pf.generator())) {
    e["type"] = "constant";
    e["matrix"] = matrix_to_json(c->ell);
  } else if (const auto* t = std::get_if<EllTabulated>(&pf.generator())) {
    e["type"] = "tabulated";
    e["matrices"] = list(t->ell);
  } else if (const auto* ip = std::get_if<EllInterpolated>(&pf.generator())) {
    e["type"] = "interpolated";
    e["anchors"] = ip->anchors;
    e["matrices"] = list(ip->ell);
  } else {
    fail_validation("not_serializable", "functional ell has no JSON form");
  }
  out["ell"] = std::move(e);
  return out;
}

// ---- reports

inline Json groups_to_json(const std::vector<ExponentGroup>& groups) {
  Json out = Json::array();
  for (const auto& g : groups) {
    Json e;
    e["value"] = number(g.neg_inf ? kNegInf : g.value);
    e["multiplicity"] = g.multiplicity;
    out.push_back(std::move(e));
  }
  return out;
}

inline std::string to_string(LyapunovMethod m) {
  return m == LyapunovMethod::periodic_exact ? "periodic_exact" : "qr_orbit";
}

inline Json lyapunov_to_json(const LyapunovReport& r) {
  Json out;
  out["method"] = to_string(r.method);
  out["steps"] = r.steps;
  out["converged"] = r.converged;
  out["groups"] = groups_to_json(r.groups);
  out["exponents"] = doubles_to_json(r.raw);
  out["point_count"] = r.groups.size();
  out["warnings"] = r.warnings;
  return out;
}

inline Json certificate_to_json(const DominationCertificate& c) {
  Json out;
  out["valid"] = c.valid;
  out["m"] = c.m;
  out["worst_ratio"] = number(c.worst_ratio);
  out["threshold"] = 0.5;
  out["splitting_dims"] = c.splitting_dims;
  out["per_point_ratios"] = doubles_to_json(c.per_point_ratios);
  out["per_cut_ratios"] = doubles_to_json(c.per_cut_ratios);
  out["worst_by_m"] = doubles_to_json(c.worst_by_m);
  Json pts = Json::array();
  for (const auto& p : c.points) pts.push_back(point_to_json(p));
  out["points"] = std::move(pts);
  out["invariance_residual"] = number(c.invariance_residual);
  out["sample"] = c.sample_description;
  return out;
}

inline Json attempt_to_json(const CertificateAttempt& a) {
  if (a.certificate) return certificate_to_json(*a.certificate);
  Json out;
  out["valid"] = false;
  if (!a.failure.empty()) out["failure"] = a.failure;
  return out;
}

inline Json analysis_to_json(const Analysis& a) {
  Json out;
  out["classification"] = to_string(a.classification);
  out["empirical"] = a.empirical;
  out["spectrum"] = lyapunov_to_json(a.spectrum);
  out["zero_split"] = attempt_to_json(a.zero_split);
  out["full_split"] = attempt_to_json(a.full_split);
  return out;
}

inline Json shift_to_json(const ShiftTable& t) {
  Json out;
  out["rho"] = t.rho;
  out["max_error"] = number(t.max_error);
  out["zero_preserved"] = t.zero_preserved;
  out["zero_subspace_distance"] = number(t.zero_subspace_distance);
  Json rows = Json::array();
  for (const auto& r : t.rows) {
    Json e;
    e["original"] = number(r.original);
    e["expected"] = number(r.expected);
    e["deformed"] = number(r.deformed);
    e["error"] = number(r.error);
    rows.push_back(std::move(e));
  }
  out["rows"] = std::move(rows);
  return out;
}

inline Json ruelle_to_json(const RuelleReport& r) {
  Json out = analysis_to_json(r.analysis);
  out["pullback"] = r.pullback;
  out["max_conformality_defect"] = number(r.max_conformality_defect);
  out["max_projective_residual"] = number(r.max_projective_residual);
  out["max_literal_residual"] = number(r.max_literal_residual);
  out["min_density"] = number(r.min_density);
  return out;
}

}  // namespace stochdom
