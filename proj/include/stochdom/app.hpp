#pragma once

// Batch front end: config parsing, pipelines, ordered worker pool, reports.

#include <atomic>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "serialize.hpp"

namespace stochdom {

enum class Command { gen, lyap, dominate, perturb, access, ruelle, classify };

inline const std::vector<std::pair<std::string, Command>>& command_names() {
  static const std::vector<std::pair<std::string, Command>> names{
      {"gen", Command::gen},         {"lyap", Command::lyap},     {"dominate", Command::dominate},
      {"perturb", Command::perturb}, {"access", Command::access}, {"ruelle", Command::ruelle},
      {"classify", Command::classify}};
  return names;
}

inline std::string to_string(Command c) {
  for (const auto& [name, cmd] : command_names())
    if (cmd == c) return name;
  return "?";
}

struct RunConfig {
  Command command = Command::gen;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  std::string format = "json";
  std::string out;  // directory; empty writes to stdout
  Tolerances tolerances;
  std::optional<Json> spec;
  std::optional<Json> partition;
  Json params = Json::object();
};

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::size_t> threads;
  std::optional<std::string> format;
};

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace detail {

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) fail_validation("unreadable_file", "cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline Json parse_json(const std::string& text, const std::string& what) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    fail_validation("invalid_json", what + ": " + e.what());
  }
}

inline Json inline_or_file(const Json& cfg, const std::string& key, const std::filesystem::path& dir) {
  const std::string path_key = key + "_path";
  require(!(cfg.contains(key) && cfg.contains(path_key)), "invalid_config",
          "give either '" + key + "' or '" + path_key + "', not both");
  if (cfg.contains(key)) return cfg[key];
  std::filesystem::path p = as_string(cfg[path_key], path_key);
  if (p.is_relative()) p = dir / p;
  return parse_json(read_file(p), p.string());
}

}  // namespace detail

inline void check_format(const std::string& f) {
  require(f == "json" || f == "csv", "invalid_format", "format must be json or csv, got '" + f + "'");
}

/// Parses a config document; `dir` resolves relative *_path entries.
inline RunConfig parse_config(const std::string& text, const std::filesystem::path& dir = ".") {
  const bool blank = text.find_first_not_of(" \t\r\n") == std::string::npos;
  const Json cfg = blank ? Json::object() : detail::parse_json(text, "config");
  require(cfg.is_object(), "invalid_config", "config must be a JSON object");
  if (!cfg.contains("command")) fail_validation("missing_command", "missing command: config must name a command");
  detail::check_keys(cfg,
                     {"command", "seed", "threads", "format", "out", "tolerances", "spec", "spec_path", "partition",
                      "partition_path", "params"},
                     "config");
  RunConfig rc;
  const std::string name = detail::as_string(cfg["command"], "command");
  bool known = false;
  for (const auto& [n, c] : command_names())
    if (n == name) {
      rc.command = c;
      known = true;
    }
  if (!known) fail_validation("unknown_command", "unknown command '" + name + "'");
  if (cfg.contains("seed")) rc.seed = detail::as_uint(cfg["seed"], "seed");
  if (cfg.contains("threads")) rc.threads = detail::as_uint(cfg["threads"], "threads");
  if (cfg.contains("format")) rc.format = detail::as_string(cfg["format"], "format");
  if (cfg.contains("out")) rc.out = detail::as_string(cfg["out"], "out");
  if (cfg.contains("tolerances")) rc.tolerances = tolerances_from_json(cfg["tolerances"]);
  if (cfg.contains("spec") || cfg.contains("spec_path")) rc.spec = detail::inline_or_file(cfg, "spec", dir);
  if (cfg.contains("partition") || cfg.contains("partition_path"))
    rc.partition = detail::inline_or_file(cfg, "partition", dir);
  if (cfg.contains("params")) {
    require(cfg["params"].is_object(), "invalid_config", "params must be an object");
    rc.params = cfg["params"];
  }
  check_format(rc.format);
  return rc;
}

inline void apply(RunConfig& rc, const Overrides& o) {
  if (o.seed) rc.seed = *o.seed;
  if (o.out) rc.out = *o.out;
  if (o.threads) rc.threads = *o.threads;
  if (o.format) rc.format = *o.format;
  check_format(rc.format);
  require(rc.threads >= 1, "invalid_threads", "threads must be at least 1");
}

/// Everything that can change results; output location and thread count cannot.
inline Json canonical(const RunConfig& rc) {
  Json j;
  j["command"] = to_string(rc.command);
  j["seed"] = rc.seed;
  j["format"] = rc.format;
  j["tolerances"] = tolerances_to_json(rc.tolerances);
  if (rc.spec) j["spec"] = *rc.spec;
  if (rc.partition) j["partition"] = *rc.partition;
  j["params"] = rc.params;
  return j;
}

inline std::string config_hash(const RunConfig& rc) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(canonical(rc).dump())));
  return buf;
}

/// fn(i) for i < count on `threads` workers; results in index order. The
/// lowest-index exception is rethrown.
template <class F>
auto parallel_map(std::size_t count, std::size_t threads, F fn) -> std::vector<decltype(fn(std::size_t{}))> {
  using T = decltype(fn(std::size_t{}));
  std::vector<std::optional<T>> slots(count);
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < count;) {
      try {
        slots[i].emplace(fn(i));
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t k = std::max<std::size_t>(1, std::min(threads, count));
  if (k == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < k; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  std::vector<T> out;
  out.reserve(count);
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

class Csv {
 public:
  explicit Csv(std::vector<std::string> header) : width_(header.size()) { row(header); }

  void row(const std::vector<std::string>& cells) {
    require(cells.size() == width_, "csv_shape", "row width differs from header");
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) text_ += ',';
      text_ += cells[i];
    }
    text_ += '\n';
  }

  const std::string& str() const { return text_; }

 private:
  std::size_t width_;
  std::string text_;
};

inline std::string cell(double x) { return format_double(x); }
inline std::string cell(std::size_t x) { return std::to_string(x); }
inline std::string cell(bool x) { return x ? "true" : "false"; }

struct RunOutput {
  Json report;
  std::string csv;
};

namespace detail {

class Params {
 public:
  Params(const Json& j, const std::set<std::string>& allowed, const std::string& command) : j_(j) {
    check_keys(j, allowed, command + " params");
  }
  bool has(const std::string& k) const { return j_.contains(k); }
  const Json& raw(const std::string& k) const { return j_.at(k); }
  double real(const std::string& k, double def) const { return has(k) ? as_double(j_[k], k) : def; }
  std::size_t count(const std::string& k, std::size_t def) const {
    return has(k) ? static_cast<std::size_t>(as_uint(j_[k], k)) : def;
  }
  std::string text(const std::string& k, const std::string& def) const { return has(k) ? as_string(j_[k], k) : def; }

 private:
  const Json& j_;
};

inline const Json& need_spec(const RunConfig& rc) {
  if (!rc.spec) fail_validation("missing_spec", to_string(rc.command) + " needs 'spec' or 'spec_path'");
  return *rc.spec;
}

inline CocycleSpec random_spec(Index n, const BaseSystem& base, std::size_t anchors, std::optional<double> eps,
                               const Tolerances& tol, Rng& rng) {
  const RandomProfile profile = eps ? RandomProfile::near_identity(*eps) : RandomProfile::uniform();
  std::vector<StochasticMatrix> ms;
  if (const auto q = base.period()) {
    for (std::size_t k = 0; k < *q; ++k) ms.push_back(random_stochastic(n, rng, profile));
    return CocycleSpec(base, Tabulated{std::move(ms)}, tol);
  }
  require(anchors >= 1, "invalid_params", "anchors must be at least 1");
  std::vector<double> at;
  for (std::size_t k = 0; k < anchors; ++k) {
    at.push_back(static_cast<double>(k) / static_cast<double>(anchors));
    ms.push_back(random_stochastic(n, rng, profile));
  }
  return CocycleSpec(base, Interpolated{at, std::move(ms)}, tol);
}

struct RandomSpecParams {
  Index n = 3;
  BaseSystem base = FiniteCycle{1};
  std::size_t anchors = 3;
  std::optional<double> epsilon;

  RandomSpecParams(const Params& p, std::size_t default_q) : base(FiniteCycle{default_q}) {
    n = static_cast<Index>(p.count("n", 3));
    require(n >= 2 && n <= 64, "invalid_params", "n must lie in [2, 64]");
    if (p.has("base")) base = base_from_json(p.raw("base"));
    anchors = p.count("anchors", 3);
    if (p.has("epsilon")) epsilon = p.real("epsilon", 0.0);
  }
};

inline std::optional<BasePoint> origin_param(const Params& p, const BaseSystem& base) {
  if (!p.has("origin")) return std::nullopt;
  return point_from_json(p.raw("origin"), base);
}

inline AnalysisOptions analysis_params(const Params& p, const BaseSystem& base, std::uint64_t seed) {
  AnalysisOptions opt;
  opt.m_max = p.count("m_max", opt.m_max);
  opt.length = p.count("length", opt.length);
  opt.sample = p.count("sample", opt.sample);
  opt.origin = origin_param(p, base);
  opt.seed = seed;
  require(opt.m_max >= 1 && opt.length >= 10, "invalid_params", "need m_max >= 1 and length >= 10");
  return opt;
}

// ---- pipelines

inline RunOutput run_gen(const RunConfig& rc) {
  const Params p(rc.params, {"count", "n", "base", "anchors", "epsilon"}, "gen");
  const RandomSpecParams rp(p, 2);
  const std::size_t count = p.count("count", 10);
  const auto specs = parallel_map(count, rc.threads, [&](std::size_t i) {
    Rng rng = Rng::derive(rc.seed, i);
    return spec_to_json(random_spec(rp.n, rp.base, rp.anchors, rp.epsilon, rc.tolerances, rng));
  });
  RunOutput out;
  out.report["specs"] = specs;
  Csv csv({"spec", "matrix", "row", "col", "value"});
  for (std::size_t s = 0; s < specs.size(); ++s) {
    const auto& ms = specs[s]["generator"]["matrices"];
    for (std::size_t k = 0; k < ms.size(); ++k)
      for (std::size_t r = 0; r < ms[k].size(); ++r)
        for (std::size_t c = 0; c < ms[k][r].size(); ++c)
          csv.row({cell(s), cell(k), cell(r), cell(c), cell(ms[k][r][c].get<double>())});
  }
  out.csv = csv.str();
  return out;
}

inline RunOutput run_lyap(const RunConfig& rc) {
  const CocycleSpec c = spec_from_json(need_spec(rc), rc.tolerances);
  const Params p(rc.params, {"length", "origin", "method"}, "lyap");
  const std::string method = p.text("method", "auto");
  require(method == "auto" || method == "qr" || method == "periodic", "invalid_params",
          "method must be auto, qr or periodic");
  LyapunovReport r;
  if (method == "periodic" || (method == "auto" && c.base().period())) {
    r = lyapunov_periodic(c).report;
  } else {
    QrOptions qo;
    qo.seed = rc.seed;
    const auto x = origin_param(p, c.base()).value_or(c.base().origin());
    r = lyapunov_qr(c, x, p.count("length", 2000), 1, qo);
  }
  RunOutput out;
  out.report = lyapunov_to_json(r);
  Csv csv({"slot", "exponent"});
  for (std::size_t k = 0; k < r.raw.size(); ++k) csv.row({cell(k), cell(r.raw[k])});
  out.csv = csv.str();
  return out;
}

inline void certificate_rows(Csv& csv, const std::string& name, const CertificateAttempt& a) {
  if (!a.certificate) return;
  // The scan runs m = 1, 2, ...
  const auto& w = a.certificate->worst_by_m;
  for (std::size_t k = 0; k < w.size(); ++k) csv.row({name, cell(k + 1), cell(w[k])});
}

inline RunOutput run_dominate(const RunConfig& rc) {
  const CocycleSpec c = spec_from_json(need_spec(rc), rc.tolerances);
  const Params p(rc.params, {"m_max", "length", "sample", "origin"}, "dominate");
  const Analysis a = analyze(c, analysis_params(p, c.base(), rc.seed));
  RunOutput out;
  out.report = analysis_to_json(a);
  Csv csv({"split", "m", "worst_ratio"});
  certificate_rows(csv, "zero", a.zero_split);
  if (a.spectrum.groups.size() > 2) certificate_rows(csv, "full", a.full_split);
  out.csv = csv.str();
  return out;
}

inline RunOutput run_perturb(const RunConfig& rc) {
  const CocycleSpec c = spec_from_json(need_spec(rc), rc.tolerances);
  const Params p(rc.params, {"rhos"}, "perturb");
  const std::vector<double> rhos =
      p.has("rhos") ? as_doubles(p.raw("rhos"), "rhos") : std::vector<double>{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  require(!rhos.empty(), "invalid_params", "rhos must not be empty");
  const auto tables = parallel_map(rhos.size(), rc.threads, [&](std::size_t i) { return exponent_shift_check(c, rhos[i]); });
  RunOutput out;
  Json rows = Json::array();
  double worst = 0.0;
  Csv csv({"rho", "group", "lambda", "expected", "lambda_hat", "error"});
  for (const auto& t : tables) {
    rows.push_back(shift_to_json(t));
    worst = std::max(worst, t.max_error);
    for (std::size_t g = 0; g < t.rows.size(); ++g)
      csv.row({cell(t.rho), cell(g + 1), cell(t.rows[g].original), cell(t.rows[g].expected), cell(t.rows[g].deformed),
               cell(t.rows[g].error)});
  }
  out.report["sweep"] = std::move(rows);
  out.report["max_error"] = number(worst);
  out.csv = csv.str();
  return out;
}

inline RunOutput run_access(const RunConfig& rc) {
  const Params p(rc.params, {"count", "n_min", "n_max", "eps_min", "eps_max"}, "access");
  const std::size_t count = p.count("count", 200);
  const auto n_min = static_cast<Index>(p.count("n_min", 2)), n_max = static_cast<Index>(p.count("n_max", 5));
  const double e_lo = p.real("eps_min", 0.05), e_hi = p.real("eps_max", 0.25);
  require(n_min >= 2 && n_max >= n_min, "invalid_params", "need 2 <= n_min <= n_max");
  require(e_lo > 0.0 && e_hi >= e_lo, "invalid_params", "need 0 < eps_min <= eps_max");
  struct Row {
    Index n;
    double eps, angle;
    AccessResult r;
  };
  const auto rows = parallel_map(count, rc.threads, [&](std::size_t i) {
    Rng rng = Rng::derive(rc.seed, i);
    const Index n = n_min + static_cast<Index>(rng.index(static_cast<std::size_t>(n_max - n_min + 1)));
    const TransportConstants k(n);
    const double eps = rng.uniform(e_lo, e_hi);
    const auto s = random_stochastic(n, rng);
    const Vector x = random_unit_normal(n, rng);
    const double angle = eps * eps / (k.C * k.C) * rng.uniform();
    Vector y = rotate_in_normal(x, angle, rng);
    if (rng.uniform() < 0.3) y = -y;
    return Row{n, eps, angle, access(s, x, y, eps)};
  });
  RunOutput out;
  Csv csv({"index", "n", "eps", "angle", "lambda", "distance", "residual", "tightened"});
  Json items = Json::array();
  double worst_residual = 0.0, worst_excess = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& w = rows[i];
    Json e;
    e["n"] = w.n;
    e["eps"] = w.eps;
    e["angle"] = w.angle;
    e["lambda"] = w.r.lambda;
    e["distance"] = w.r.distance;
    e["residual"] = w.r.residual;
    e["flipped"] = w.r.flipped;
    e["tightened"] = w.r.tightened;
    e["R"] = matrix_to_json(w.r.R.matrix());
    items.push_back(std::move(e));
    worst_residual = std::max(worst_residual, w.r.residual);
    worst_excess = std::max(worst_excess, w.r.distance - w.eps);
    csv.row({cell(i), cell(static_cast<std::size_t>(w.n)), cell(w.eps), cell(w.angle), cell(w.r.lambda),
             cell(w.r.distance), cell(w.r.residual), cell(w.r.tightened)});
  }
  out.report["instances"] = std::move(items);
  out.report["max_residual"] = number(worst_residual);
  out.report["max_distance_minus_eps"] = number(worst_excess);
  out.csv = csv.str();
  return out;
}

inline RunOutput run_ruelle(const RunConfig& rc) {
  if (!rc.partition) fail_validation("missing_partition", "ruelle needs 'partition' or 'partition_path'");
  const PartitionFamily pf = partition_from_json(*rc.partition);
  const Params p(rc.params, {"pullback", "m_max", "length", "sample", "origin"}, "ruelle");
  // The normalized cocycle runs over f^{-1}; origins are shared points.
  const RuelleReport r = analyze_ruelle(pf, analysis_params(p, pf.base(), rc.seed), p.count("pullback", kDefaultPullback));
  RunOutput out;
  out.report = ruelle_to_json(r);
  Csv csv({"group", "value", "multiplicity"});
  const auto& g = r.analysis.spectrum.groups;
  for (std::size_t k = 0; k < g.size(); ++k)
    csv.row({cell(k), cell(g[k].neg_inf ? kNegInf : g[k].value), cell(g[k].multiplicity)});
  out.csv = csv.str();
  return out;
}

inline RunOutput run_classify(const RunConfig& rc) {
  const Params p(rc.params, {"count", "n", "base", "anchors", "epsilon", "m_max", "length", "sample"}, "classify");
  std::vector<CocycleSpec> specs;
  if (rc.spec) {
    specs.push_back(spec_from_json(*rc.spec, rc.tolerances));
  } else {
    const RandomSpecParams rp(p, 1);
    const std::size_t count = p.count("count", 100);
    for (std::size_t i = 0; i < count; ++i) {
      Rng rng = Rng::derive(rc.seed, i);
      specs.push_back(random_spec(rp.n, rp.base, rp.anchors, rp.epsilon, rc.tolerances, rng));
    }
  }
  const auto results = parallel_map(specs.size(), rc.threads, [&](std::size_t i) {
    AnalysisOptions opt = analysis_params(p, specs[i].base(), rc.seed);
    opt.length = p.count("length", 1000);
    return analyze(specs[i], opt);
  });
  std::map<std::string, std::size_t> histogram;
  for (const auto& [n, c] : std::vector<std::pair<std::string, SpectrumClass>>{
           {"trivial", SpectrumClass::trivial},
           {"two_point", SpectrumClass::two_point},
           {"multi_point_dominated", SpectrumClass::multi_point_dominated},
           {"multi_point_uncertified", SpectrumClass::multi_point_uncertified}})
    histogram[n] = 0;
  std::map<std::size_t, std::size_t> point_counts;
  Csv csv({"index", "n", "classification", "point_count", "certified_m"});
  Json items = Json::array();
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& a = results[i];
    ++histogram[to_string(a.classification)];
    ++point_counts[a.spectrum.groups.size()];
    Json e;
    e["classification"] = to_string(a.classification);
    e["point_count"] = a.spectrum.groups.size();
    e["groups"] = groups_to_json(a.spectrum.groups);
    e["full_split_valid"] = a.full_split.valid();
    if (a.full_split.valid()) e["certified_m"] = a.full_split.certificate->m;
    items.push_back(std::move(e));
    csv.row({cell(i), cell(static_cast<std::size_t>(specs[i].dim())), to_string(a.classification),
             cell(a.spectrum.groups.size()), a.full_split.valid() ? cell(a.full_split.certificate->m) : ""});
  }
  RunOutput out;
  out.report["empirical"] = true;
  Json h;
  for (const auto& [k, v] : histogram) h[k] = v;
  out.report["histogram"] = std::move(h);
  Json pc;
  for (const auto& [k, v] : point_counts) pc[std::to_string(k)] = v;
  out.report["point_count_histogram"] = std::move(pc);
  out.report["results"] = std::move(items);
  out.csv = csv.str();
  return out;
}

}  // namespace detail

/// Runs the pipeline and wraps its result in the report envelope.
inline RunOutput run(const RunConfig& rc) {
  RunOutput r;
  switch (rc.command) {
    case Command::gen: r = detail::run_gen(rc); break;
    case Command::lyap: r = detail::run_lyap(rc); break;
    case Command::dominate: r = detail::run_dominate(rc); break;
    case Command::perturb: r = detail::run_perturb(rc); break;
    case Command::access: r = detail::run_access(rc); break;
    case Command::ruelle: r = detail::run_ruelle(rc); break;
    case Command::classify: r = detail::run_classify(rc); break;
  }
  Json env;
  env["command"] = to_string(rc.command);
  env["config_hash"] = config_hash(rc);
  env["seed"] = rc.seed;
  env["tolerances"] = tolerances_to_json(rc.tolerances);
  env["result"] = std::move(r.report);
  r.report = std::move(env);
  return r;
}

inline int exit_code(ErrorKind k) { return k == ErrorKind::validation ? 2 : 3; }

inline std::string error_json(const std::string& kind, const std::string& reason, const std::string& detail) {
  Json j;
  j["error"]["kind"] = kind;
  j["error"]["reason"] = reason;
  j["error"]["detail"] = detail;
  return j.dump();
}

/// Loads, runs and writes. Returns the process exit code.
inline int execute(const std::string& config_path, const Overrides& o, std::ostream& out, std::ostream& err) {
  try {
    const std::filesystem::path path(config_path);
    RunConfig rc = parse_config(detail::read_file(path), path.parent_path().empty() ? "." : path.parent_path());
    apply(rc, o);
    const RunOutput r = run(rc);
    const std::string json_text = r.report.dump(2) + "\n";
    if (rc.out.empty()) {
      out << (rc.format == "csv" ? r.csv : json_text);
      return 0;
    }
    const std::filesystem::path dir(rc.out);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) fail_validation("unwritable_output", "cannot create " + dir.string() + ": " + ec.message());
    auto write = [&](const std::string& name, const std::string& text) {
      std::ofstream f(dir / name, std::ios::binary);
      if (!(f << text)) fail_validation("unwritable_output", "cannot write " + (dir / name).string());
    };
    const std::string stem = to_string(rc.command);
    write(stem + ".json", json_text);
    if (rc.format == "csv") write(stem + ".csv", r.csv);
    return 0;
  } catch (const Error& e) {
    err << error_json(e.kind() == ErrorKind::validation ? "validation" : "numerical", e.reason(), e.detail()) << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    err << error_json("numerical", "internal", e.what()) << "\n";
    return 3;
  }
}

}  // namespace stochdom
