#pragma once

// Experiment configuration and orchestration: FEM rate, delta sweep,
// truncation sweep, validation suite, rate fitting and CSV output.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gspde/coefficients.hpp"
#include "gspde/error.hpp"
#include "gspde/expression.hpp"
#include "gspde/fem.hpp"
#include "gspde/graph.hpp"
#include "gspde/graph_io.hpp"
#include "gspde/hamiltonian.hpp"
#include "gspde/noise.hpp"
#include "gspde/solver.hpp"

namespace gspde {

using Json = nlohmann::json;

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct GammaConfig {
  std::string family = "unit";  // unit | poly_decay | exp_decay
  double rho1 = 1.0;
  double rho2 = 0.25;
  double rho3 = 3.0;
};

struct NoiseConfig {
  std::string mode = "direct";            // direct | spectral
  std::vector<std::string> basis = {"1"};  // direct: expressions in z, k
  double bound = 1.0;
  std::vector<Atom> atoms;  // spectral
  double tail_span = 10.0;
  std::size_t samples = 24;
};

struct ExperimentConfig {
  std::string experiment = "run";
  std::string graph_source = "hamiltonian";  // file | hamiltonian | interval | three-well
  std::string graph_file;
  std::string hamiltonian = "harmonic";  // builtin name or expression in x1, x2
  std::vector<double> interval = {0.0, 1.0};
  std::string coefficients = "analytic";  // analytic | tabulated | uniform
  double uniform_alpha = 1.0;
  double uniform_beta = 1.0;
  GammaConfig gamma;
  std::string cutoff = "linear";
  std::vector<double> R;
  std::vector<double> delta;  // empty: no regularization
  std::vector<double> h;
  double h_ref = 0.0;     // 0: h_min / 4
  std::string dt = "h";   // h | h2 | <number>
  NoiseConfig noise;
  std::string b = "zero";
  std::string g = "zero";
  std::string u0 = "1";
  double T = 0.5;
  std::size_t seeds = 64;
  std::uint64_t seed = 1;
  std::string out = "out";
  std::size_t threads = 0;  // 0: hardware concurrency
  bool record_timing = false;
  // validation suite
  bool inject_bad_regularizer = false;
  std::size_t coercivity_vectors = 1000;
  std::size_t tabulation_samples = 24;
};

namespace detail {

template <class T>
void read_if(const Json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

template <class T>
bool strictly_monotone(const std::vector<T>& v, bool increasing) {
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (increasing ? !(v[i] > v[i - 1]) : !(v[i] < v[i - 1])) return false;
  }
  return true;
}

}  // namespace detail

inline Nonlinearity make_nonlinearity_checked(const std::string& name) {
  return make_nonlinearity(name);
}

/// Graph function from an expression in z (level) and k (edge index).
inline GraphFunction graph_expression(const std::string& text) {
  auto e = Expression::parse(text);
  return [e](std::size_t k, double z) { return e.at(z, static_cast<double>(k)).v; };
}

inline void validate_config(const ExperimentConfig& c) {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::InvalidConfig, what); };
  if (!detail::strictly_monotone(c.h, false)) fail("h list must be strictly decreasing");
  for (double h : c.h) {
    if (!(h > 0.0)) fail("h must be positive");
  }
  if (!c.h.empty()) {
    for (double h : c.h) {
      const double r = std::log2(c.h.front() / h);
      if (std::abs(r - std::round(r)) > 1e-9) fail("h list must be nested (powers of two)");
    }
  }
  if (!detail::strictly_monotone(c.delta, false)) fail("delta list must be strictly decreasing");
  if (!detail::strictly_monotone(c.R, true)) fail("R list must be strictly increasing");
  if (!(c.T >= 0.0)) fail("T must be non-negative");
  for (const auto& n : {c.b, c.g}) make_nonlinearity(n);
  Expression::parse(c.u0);
  if (c.noise.mode == "direct") {
    for (const auto& e : c.noise.basis) Expression::parse(e);
  } else if (c.noise.mode != "spectral") {
    fail("noise mode must be direct or spectral");
  }
  if (c.dt != "h" && c.dt != "h2") {
    try {
      if (!(std::stod(c.dt) > 0.0)) fail("dt must be positive");
    } catch (const std::invalid_argument&) {
      fail("dt must be h, h2 or a number");
    }
  }
  if (c.cutoff != "linear" && c.cutoff != "smoothed") fail("cutoff must be linear or smoothed");
  const std::vector<std::string> sources = {"file", "hamiltonian", "interval", "three-well"};
  if (std::find(sources.begin(), sources.end(), c.graph_source) == sources.end()) {
    fail("unknown graph source '" + c.graph_source + "'");
  }
  const std::vector<std::string> coeffs = {"analytic", "tabulated", "uniform"};
  if (std::find(coeffs.begin(), coeffs.end(), c.coefficients) == coeffs.end()) {
    fail("unknown coefficient source '" + c.coefficients + "'");
  }
  if ((c.coefficients == "tabulated" || c.noise.mode == "spectral") &&
      c.graph_source != "hamiltonian") {
    fail("tabulated coefficients and spectral noise need a Hamiltonian graph source");
  }
}

inline ExperimentConfig parse_config(const Json& j, const std::string& base_dir = ".") {
  ExperimentConfig c;
  try {
    detail::read_if(j, "experiment", c.experiment);
    if (j.contains("graph")) {
      const auto& g = j.at("graph");
      detail::read_if(g, "source", c.graph_source);
      detail::read_if(g, "path", c.graph_file);
      detail::read_if(g, "name", c.hamiltonian);
      detail::read_if(g, "interval", c.interval);
      if (!c.graph_file.empty() && c.graph_file.front() != '/') {
        c.graph_file = base_dir + "/" + c.graph_file;
      }
    }
    if (j.contains("coefficients")) {
      const auto& cf = j.at("coefficients");
      if (cf.is_string()) {
        c.coefficients = cf.get<std::string>();
      } else {
        detail::read_if(cf, "source", c.coefficients);
        detail::read_if(cf, "alpha", c.uniform_alpha);
        detail::read_if(cf, "beta", c.uniform_beta);
        detail::read_if(cf, "samples", c.tabulation_samples);
      }
    }
    if (j.contains("gamma")) {
      const auto& g = j.at("gamma");
      detail::read_if(g, "family", c.gamma.family);
      detail::read_if(g, "rho1", c.gamma.rho1);
      detail::read_if(g, "rho2", c.gamma.rho2);
      detail::read_if(g, "rho3", c.gamma.rho3);
    }
    detail::read_if(j, "cutoff", c.cutoff);
    detail::read_if(j, "R", c.R);
    detail::read_if(j, "delta", c.delta);
    detail::read_if(j, "h", c.h);
    detail::read_if(j, "h_ref", c.h_ref);
    if (j.contains("dt")) {
      c.dt = j.at("dt").is_number() ? std::to_string(j.at("dt").get<double>())
                                    : j.at("dt").get<std::string>();
    }
    if (j.contains("noise")) {
      const auto& n = j.at("noise");
      detail::read_if(n, "mode", c.noise.mode);
      detail::read_if(n, "basis", c.noise.basis);
      detail::read_if(n, "bound", c.noise.bound);
      detail::read_if(n, "tail_span", c.noise.tail_span);
      detail::read_if(n, "samples", c.noise.samples);
      if (n.contains("atoms")) {
        for (const auto& a : n.at("atoms")) {
          const auto xi = a.at("xi").get<std::vector<double>>();
          if (xi.size() != 2) throw Error(ErrorCode::InvalidConfig, "atom xi needs 2 entries");
          c.noise.atoms.push_back({Vec2(xi[0], xi[1]), a.at("w").get<double>()});
        }
      }
    }
    detail::read_if(j, "b", c.b);
    detail::read_if(j, "g", c.g);
    detail::read_if(j, "u0", c.u0);
    detail::read_if(j, "T", c.T);
    detail::read_if(j, "seeds", c.seeds);
    detail::read_if(j, "seed", c.seed);
    detail::read_if(j, "out", c.out);
    detail::read_if(j, "threads", c.threads);
    detail::read_if(j, "inject_bad_regularizer", c.inject_bad_regularizer);
    detail::read_if(j, "coercivity_vectors", c.coercivity_vectors);
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, e.what());
  }
  validate_config(c);
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::InvalidConfig, "cannot open config " + path);
  Json j;
  try {
    in >> j;
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::ParseError, path + ": " + e.what());
  }
  const auto slash = path.find_last_of('/');
  return parse_config(j, slash == std::string::npos ? "." : path.substr(0, slash));
}

// ---------------------------------------------------------------------------
// Problem context
// ---------------------------------------------------------------------------

struct Context {
  ExperimentConfig cfg;
  MetricGraph graph;
  std::optional<HamiltonianSpec> spec;
  std::optional<ReebGraph> reeb;
  CoefficientField field;
  NoiseModel noise;
  GraphFunction u0;
  Nonlinearity b;
  Nonlinearity g;
};

inline HamiltonianSpec hamiltonian_from(const std::string& name) {
  const auto names = hamiltonian_names();
  if (std::find(names.begin(), names.end(), name) != names.end()) return make_hamiltonian(name);
  return normalize(HamiltonianSpec::from_expression(name));
}

inline Context build_context(const ExperimentConfig& cfg) {
  Context ctx;
  ctx.cfg = cfg;
  if (cfg.graph_source == "hamiltonian") {
    ctx.spec = hamiltonian_from(cfg.hamiltonian);
    ctx.reeb = build_reeb_graph(*ctx.spec);
    ctx.graph = ctx.reeb->graph;
  } else if (cfg.graph_source == "file") {
    std::ifstream in(cfg.graph_file);
    if (!in) throw Error(ErrorCode::InvalidConfig, "cannot open graph file " + cfg.graph_file);
    ctx.graph = read_graph(in);
  } else if (cfg.graph_source == "interval") {
    if (cfg.interval.size() != 2) throw Error(ErrorCode::InvalidConfig, "interval needs [a, b]");
    ctx.graph = interval_graph(cfg.interval[0], cfg.interval[1]);
  } else {
    ctx.graph = three_well_graph();
  }

  if (cfg.coefficients == "uniform") {
    const double a = cfg.uniform_alpha, bb = cfg.uniform_beta;
    ctx.field = CoefficientField::uniform(ctx.graph, [a](double) { return a; },
                                          [bb](double) { return bb; },
                                          [](double) { return 0.0; });
  } else if (cfg.coefficients == "tabulated") {
    TabulationOptions opt;
    opt.samples = cfg.tabulation_samples;
    ctx.field = tabulate_coefficients(*ctx.spec, *ctx.reeb, opt);
  } else if (cfg.graph_source == "hamiltonian" && cfg.hamiltonian == "harmonic") {
    ctx.field = harmonic_coefficients(ctx.graph);
  } else {
    ctx.field = analytic_coefficients(ctx.graph, default_profile(ctx.graph));
  }

  if (cfg.noise.mode == "spectral") {
    TabulationOptions opt;
    opt.tail_span = cfg.noise.tail_span;
    opt.samples = cfg.noise.samples;
    ctx.noise = build_spectral_noise(*ctx.spec, *ctx.reeb, cfg.noise.atoms, opt);
  } else {
    std::vector<GraphFunction> basis;
    for (const auto& e : cfg.noise.basis) basis.push_back(graph_expression(e));
    ctx.noise = build_direct_noise(ctx.graph, std::move(basis), cfg.noise.bound);
  }
  ctx.u0 = graph_expression(cfg.u0);
  ctx.b = make_nonlinearity(cfg.b);
  ctx.g = make_nonlinearity(cfg.g);
  return ctx;
}

inline WeightFunction make_gamma(const Context& ctx) {
  const auto& gc = ctx.cfg.gamma;
  if (gc.family == "unit") return WeightFunction::unit();
  auto tail = ctx.graph.unbounded_edge();
  const std::size_t k = tail ? *tail : ctx.graph.num_edges() - 1;
  const double H0 = ctx.graph.edges()[k].a;
  if (gc.family == "poly_decay") return WeightFunction::poly_decay(k, H0, gc.rho3);
  if (gc.family == "exp_decay") return WeightFunction::exp_decay(k, H0, gc.rho1, gc.rho2);
  throw Error(ErrorCode::InvalidConfig, "unknown gamma family '" + gc.family + "'");
}

inline CutOff make_cutoff(const Context& ctx, double R) {
  return make_cutoff(R, ctx.cfg.cutoff == "smoothed" ? CutOffKind::SmoothedLinear
                                                     : CutOffKind::Linear);
}

/// Coefficients of the (truncated, regularized) problem at (R, delta).
struct Discretization {
  MetricGraph compact;
  std::optional<TruncatedGraph> tg;
  std::optional<RegularizedPair> pair;
  FormCoefficients coeffs;
  std::function<double(double)> eta;  // empty on compact graphs
  double R = 0.0;
  double delta = 0.0;
};

inline Discretization discretize(const Context& ctx, double R, double delta) {
  Discretization d;
  d.R = R;
  d.delta = delta;
  const auto gamma = make_gamma(ctx);
  CoefficientField field = ctx.field;
  if (ctx.graph.is_compact()) {
    d.compact = ctx.graph;
  } else {
    d.tg = truncate(ctx.graph, R);
    d.compact = d.tg->graph();
    const auto eta = make_cutoff(ctx, R);
    field = truncate_alpha(ctx.field, *d.tg, eta);
    d.eta = [eta](double z) { return eta(z); };
  }
  if (delta > 0.0) {
    d.pair = d.tg ? regularize(field, *d.tg, delta) : regularize(field, d.compact, delta);
    d.coeffs = form_coefficients(*d.pair, gamma);
  } else {
    d.coeffs = form_coefficients(field, gamma);
  }
  return d;
}

inline double time_step(const ExperimentConfig& cfg, double h) {
  if (cfg.dt == "h") return h;
  if (cfg.dt == "h2") return h * h;
  return std::stod(cfg.dt);
}

inline ProblemInstance make_level(const Context& ctx, const Discretization& d,
                                  const FemSpace& space, double dt) {
  InstanceOptions opt;
  opt.b = ctx.b;
  opt.g = ctx.g;
  opt.eta = d.eta;
  opt.T = ctx.cfg.T;
  opt.dt = dt;
  opt.delta = d.delta;
  opt.R = d.R;
  return make_instance(space, d.coeffs, ctx.noise, ctx.u0, opt);
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

struct LevelResult {
  double param = 0.0;
  double error = 0.0;
  double stderr_ = 0.0;
  std::size_t seeds = 0;
  std::optional<double> wallclock;
  std::vector<std::pair<std::string, double>> extra;
};

struct RateFit {
  double slope = 0.0;
  double slope_stderr = 0.0;
  double intercept = 0.0;
  std::vector<std::size_t> used;
};

struct ErrorReport {
  std::string experiment;
  std::string param_name;
  std::vector<LevelResult> levels;
  std::optional<RateFit> fit;
  std::vector<std::pair<std::string, double>> metrics;
  std::vector<std::string> notes;
  std::vector<std::string> failures;
  bool pass = false;

  double metric(const std::string& name) const {
    for (const auto& [k, v] : metrics) {
      if (k == name) return v;
    }
    throw Error(ErrorCode::PreconditionViolated, "no metric " + name);
  }
};

/// Weighted least squares of log(error) on log(h) with weights from the
/// relative standard errors. The slope error is the larger of the
/// propagated and the residual-based estimate.
inline RateFit fit_rate(const std::vector<double>& h, const std::vector<double>& error,
                        const std::vector<double>& stderr_) {
  const std::size_t n = h.size();
  if (n < 3 || error.size() != n || stderr_.size() != n) {
    throw Error(ErrorCode::InsufficientLevels, "rate fit needs >= 3 levels, got " +
                                                   std::to_string(n));
  }
  std::vector<double> x(n), y(n), w(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!(h[i] > 0.0) || !(error[i] > 0.0)) {
      throw Error(ErrorCode::PreconditionViolated, "rate fit needs positive h and errors");
    }
    x[i] = std::log(h[i]);
    y[i] = std::log(error[i]);
    const double rel = std::max(stderr_[i] / error[i], 1e-12);
    w[i] = 1.0 / (rel * rel);
  }
  double sw = 0, sx = 0, sy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sw += w[i];
    sx += w[i] * x[i];
    sy += w[i] * y[i];
  }
  const double xm = sx / sw, ym = sy / sw;
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += w[i] * (x[i] - xm) * (x[i] - xm);
    sxy += w[i] * (x[i] - xm) * (y[i] - ym);
  }
  if (!(sxx > 0.0)) throw Error(ErrorCode::InsufficientLevels, "rate fit needs distinct h");
  RateFit f;
  f.slope = sxy / sxx;
  f.intercept = ym - f.slope * xm;
  double chi2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = y[i] - f.intercept - f.slope * x[i];
    chi2 += w[i] * r * r;
  }
  const double var_known = 1.0 / sxx;
  const double var_resid = chi2 / static_cast<double>(n - 2) / sxx;
  f.slope_stderr = std::sqrt(std::max(var_known, var_resid));
  // with all stderrs zero the propagated part is an artefact of the floor
  bool exact = true;
  for (double s : stderr_) exact &= s == 0.0;
  if (exact) f.slope_stderr = std::sqrt(var_resid);
  for (std::size_t i = 0; i < n; ++i) f.used.push_back(i);
  return f;
}

/// Levels whose standard error is below a third of the gap to the
/// neighbouring level.
inline std::vector<std::size_t> usable_levels(const std::vector<LevelResult>& levels) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < levels.size(); ++i) {
    const std::size_t j = i + 1 < levels.size() ? i + 1 : i - 1;
    const double gap = std::abs(levels[i].error - levels[j].error);
    if (levels[i].stderr_ < gap / 3.0) out.push_back(i);
  }
  return out;
}

inline RateFit fit_levels(const std::vector<LevelResult>& levels) {
  const auto use = usable_levels(levels);
  std::vector<double> h, e, s;
  for (std::size_t i : use) {
    h.push_back(levels[i].param);
    e.push_back(levels[i].error);
    s.push_back(levels[i].stderr_);
  }
  auto f = fit_rate(h, e, s);
  f.used = use;
  return f;
}

namespace detail {

inline std::string fmt(double v) {
  if (std::isnan(v)) return "NA";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10e", v);
  return buf;
}

}  // namespace detail

/// experiment, level, param, error, stderr, seeds, wallclock_s
inline void write_report_csv(std::ostream& os, const ErrorReport& r, bool record_timing) {
  os << "experiment,level,param,error,stderr,seeds,wallclock_s\n";
  for (std::size_t i = 0; i < r.levels.size(); ++i) {
    const auto& l = r.levels[i];
    os << r.experiment << ',' << i << ',' << detail::fmt(l.param) << ','
       << detail::fmt(l.error) << ',' << detail::fmt(l.stderr_) << ',' << l.seeds << ',';
    if (record_timing && l.wallclock) {
      os << detail::fmt(*l.wallclock);
    } else {
      os << "NA";
    }
    os << '\n';
  }
}

/// experiment, quantity, value: fit, metrics, per-level extras and notes.
inline void write_summary_csv(std::ostream& os, const ErrorReport& r) {
  os << "experiment,quantity,value\n";
  auto row = [&](const std::string& q, const std::string& v) {
    os << r.experiment << ',' << q << ',' << v << '\n';
  };
  row("param", r.param_name);
  if (r.fit) {
    row("slope", detail::fmt(r.fit->slope));
    row("slope_stderr", detail::fmt(r.fit->slope_stderr));
    row("levels_used", std::to_string(r.fit->used.size()));
  }
  for (const auto& [k, v] : r.metrics) row(k, detail::fmt(v));
  for (std::size_t i = 0; i < r.levels.size(); ++i) {
    for (const auto& [k, v] : r.levels[i].extra) row(k + "[" + std::to_string(i) + "]", detail::fmt(v));
  }
  for (const auto& f : r.failures) row("failure", "\"" + f + "\"");
  for (const auto& n : r.notes) row("note", "\"" + n + "\"");
  row("pass", r.pass ? "1" : "0");
}

// ---------------------------------------------------------------------------
// Experiments
// ---------------------------------------------------------------------------

namespace detail {

inline std::size_t power_of_two(double ratio, const char* what) {
  const double r = std::log2(ratio);
  if (std::abs(r - std::round(r)) > 1e-9 || r < -1e-9) {
    throw Error(ErrorCode::NonNestedMeshes, std::string(what) + " ratios must be powers of two");
  }
  return static_cast<std::size_t>(std::llround(r));
}

inline std::size_t threads_of(const ExperimentConfig& c) {
  return c.threads ? c.threads : default_threads();
}

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

/// Per-seed matrix of observables, seeds x levels; deterministic runs use
/// a single evaluation.
struct SeedTable {
  std::vector<std::vector<double>> values;  // [seed][level]
  std::vector<double> seconds;              // per level, summed over seeds
  std::vector<std::string> failures;
  std::size_t seeds = 0;
};

inline SeedTable run_seeds(const ExperimentConfig& cfg, bool stochastic, std::size_t levels,
                           const std::function<std::vector<double>(std::uint64_t,
                                                                   std::vector<double>&)>& body) {
  SeedTable t;
  const std::size_t n = stochastic ? cfg.seeds : 1;
  if (stochastic && n < 2) throw Error(ErrorCode::InsufficientSeeds, "need >= 2 seeds");
  t.seeds = n;
  t.values.assign(n, std::vector<double>(levels, std::nan("")));
  std::vector<std::vector<double>> secs(n, std::vector<double>(levels, 0.0));
  std::vector<std::string> errors(n);
  parallel_for(n, threads_of(cfg), [&](std::size_t i) {
    try {
      t.values[i] = body(cfg.seed + i, secs[i]);
    } catch (const std::exception& e) {
      errors[i] = "seed " + std::to_string(cfg.seed + i) + ": " + e.what();
    }
  });
  t.seconds.assign(levels, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t l = 0; l < levels; ++l) t.seconds[l] += secs[i][l];
    if (!errors[i].empty()) t.failures.push_back(errors[i]);
  }
  return t;
}

inline std::vector<double> column(const SeedTable& t, std::size_t l) {
  std::vector<double> v;
  for (const auto& row : t.values) v.push_back(row[l]);
  return v;
}

inline NoiseIncrementStream stream_for(const Context& ctx, std::uint64_t seed, double dt) {
  const auto n = static_cast<std::size_t>(std::llround(ctx.cfg.T / dt));
  return sample_increments(ctx.noise.J(), seed, uniform_grid(ctx.cfg.T, n));
}

}  // namespace detail

/// RMS error of each h level against a reference 4x finer (or h_ref), with
/// bridge-coupled noise and nested meshes.
inline ErrorReport run_fem_rate(const Context& ctx) {
  const auto& cfg = ctx.cfg;
  if (cfg.h.size() < 3) {
    throw Error(ErrorCode::InsufficientLevels, "fem-rate needs >= 3 h levels");
  }
  const double R = cfg.R.empty() ? 0.0 : cfg.R.front();
  const double delta = cfg.delta.empty() ? 0.0 : cfg.delta.front();
  const auto d = discretize(ctx, R, delta);
  const double h0 = cfg.h.front();
  const double h_ref = cfg.h_ref > 0.0 ? cfg.h_ref : cfg.h.back() / 4.0;
  const FemSpace base = build_space(d.compact, h0);
  std::vector<FemSpace> spaces;
  std::vector<double> dts;
  for (double h : cfg.h) {
    spaces.push_back(base.refined(std::size_t{1} << detail::power_of_two(h0 / h, "h")));
    dts.push_back(time_step(cfg, h));
  }
  const FemSpace ref_space =
      base.refined(std::size_t{1} << detail::power_of_two(h0 / h_ref, "h_ref"));
  const double dt_ref = time_step(cfg, h_ref);
  std::vector<ProblemInstance> inst;
  for (std::size_t l = 0; l < spaces.size(); ++l) inst.push_back(make_level(ctx, d, spaces[l], dts[l]));
  const ProblemInstance ref = make_level(ctx, d, ref_space, dt_ref);
  const bool stochastic = ref.stochastic();
  const double dt0 = dts.front();
  std::vector<std::size_t> refine;
  for (double dt : dts) refine.push_back(detail::power_of_two(dt0 / dt, "dt"));
  const std::size_t refine_ref = detail::power_of_two(dt0 / dt_ref, "dt");

  const std::size_t L = spaces.size();
  auto table = detail::run_seeds(cfg, stochastic, L, [&](std::uint64_t seed,
                                                         std::vector<double>& secs) {
    const auto base_stream = detail::stream_for(ctx, seed, dt0);
    auto t0 = detail::Clock::now();
    const auto sref = base_stream.refined(refine_ref);
    const Vector uref = integrate(ref, &sref, 1u << 30).final();
    const double tref = detail::seconds_since(t0);
    std::vector<double> err(L);
    for (std::size_t l = 0; l < L; ++l) {
      t0 = detail::Clock::now();
      const auto s = base_stream.refined(refine[l]);
      const Vector u = integrate(inst[l], &s, 1u << 30).final();
      err[l] = weighted_error(ref_space, uref, spaces[l], u, ref.ops.M);
      secs[l] += detail::seconds_since(t0) + tref / static_cast<double>(L);
    }
    return err;
  });

  ErrorReport r;
  r.experiment = "fem-rate";
  r.param_name = "h";
  r.failures = table.failures;
  for (std::size_t l = 0; l < L; ++l) {
    const auto s = summarize(detail::column(table, l));
    if (s.ok < (stochastic ? 2u : 1u)) throw Error(ErrorCode::InsufficientSeeds, "too many failed seeds");
    LevelResult lr;
    lr.param = cfg.h[l];
    lr.error = s.rms;
    lr.stderr_ = stochastic ? s.rms_stderr : 0.0;
    lr.seeds = s.ok;
    lr.wallclock = table.seconds[l];
    lr.extra = {{"h_max", spaces[l].h_max()}, {"dt", dts[l]}, {"dofs", static_cast<double>(spaces[l].dim())}};
    r.levels.push_back(lr);
  }
  r.fit = fit_levels(r.levels);
  r.metrics = {{"h_ref", h_ref},
               {"R", R},
               {"delta", delta},
               {"T", cfg.T},
               {"slope_target", stochastic ? 0.4 : 1.9}};
  r.pass = r.fit->slope >= (stochastic ? 0.4 : 1.9) && r.fit->slope_stderr <= 0.1;
  return r;
}

/// Cauchy differences E|u^{delta_i} - u^{delta_{i+1}}|_{beta gamma} with a
/// shared stream and mesh.
inline ErrorReport run_delta_sweep(const Context& ctx) {
  const auto& cfg = ctx.cfg;
  if (cfg.delta.size() < 3) throw Error(ErrorCode::InsufficientLevels, "delta-sweep needs >= 3 deltas");
  if (cfg.h.empty()) throw Error(ErrorCode::InvalidConfig, "delta-sweep needs h");
  const double R = cfg.R.empty() ? 0.0 : cfg.R.front();
  std::vector<Discretization> ds;
  for (double delta : cfg.delta) ds.push_back(discretize(ctx, R, delta));
  const FemSpace space = build_space(ds.front().compact, cfg.h.front());
  const double dt = time_step(cfg, cfg.h.front());
  std::vector<ProblemInstance> inst;
  for (const auto& d : ds) inst.push_back(make_level(ctx, d, space, dt));
  const bool stochastic = inst.front().stochastic();
  const SparseMatrix& M = inst.front().ops.M;
  const std::size_t L = ds.size() - 1;
  auto table = detail::run_seeds(cfg, stochastic, L, [&](std::uint64_t seed,
                                                         std::vector<double>& secs) {
    const auto s = detail::stream_for(ctx, seed, dt);
    std::vector<Vector> u;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      const auto t0 = detail::Clock::now();
      u.push_back(integrate(inst[i], &s, 1u << 30).final());
      secs[std::min(i, L - 1)] += detail::seconds_since(t0);
    }
    std::vector<double> diff(L);
    for (std::size_t i = 0; i < L; ++i) {
      const Vector dlt = u[i] - u[i + 1];
      diff[i] = std::sqrt(std::max(0.0, dlt.dot(M * dlt)));
    }
    return diff;
  });
  ErrorReport r;
  r.experiment = "delta-sweep";
  r.param_name = "delta";
  r.failures = table.failures;
  for (std::size_t i = 0; i < L; ++i) {
    const auto s = summarize(detail::column(table, i));
    LevelResult lr;
    lr.param = cfg.delta[i];
    lr.error = s.mean;
    lr.stderr_ = stochastic ? s.stderr_ : 0.0;
    lr.seeds = s.ok;
    lr.wallclock = table.seconds[i];
    lr.extra = {{"delta_next", cfg.delta[i + 1]},
                {"ci95_lo", lr.error - 1.96 * lr.stderr_},
                {"ci95_hi", lr.error + 1.96 * lr.stderr_}};
    r.levels.push_back(lr);
  }
  bool monotone = true;
  for (std::size_t i = 0; i + 1 < L; ++i) {
    const auto& a = r.levels[i];
    const auto& b = r.levels[i + 1];
    const double slack = 1.96 * std::hypot(a.stderr_, b.stderr_);
    monotone &= b.error <= a.error + slack;
  }
  const double last_over_first = r.levels.back().error / r.levels.front().error;
  r.metrics = {{"h", cfg.h.front()},
               {"R", R},
               {"delta_min", ds.front().pair ? ds.front().pair->delta_min() : 0.0},
               {"monotone_within_ci", monotone ? 1.0 : 0.0},
               {"last_over_first", last_over_first}};
  r.pass = monotone && last_over_first <= 0.25;
  if (!stochastic) r.notes.push_back("deterministic run: intervals are zero width");
  return r;
}

/// B(R) = sup_{z >= R-1} alpha_m(z) sqrt(gamma_m(z)) on the unbounded edge.
inline double truncation_bound_proxy(const Context& ctx, double R) {
  const auto tail = ctx.graph.unbounded_edge();
  if (!tail) throw Error(ErrorCode::NoUnboundedEdge, "truncation sweep needs an unbounded edge");
  const auto gamma = make_gamma(ctx);
  double sup = 0.0;
  const double z0 = std::max(R - 1.0, ctx.graph.edges()[*tail].a);
  // log-spaced up to 1e6
  const std::size_t n = 20000;
  for (std::size_t i = 0; i <= n; ++i) {
    const double z = z0 + std::expm1(std::log1p(1e6) * static_cast<double>(i) / n);
    sup = std::max(sup, ctx.field.alpha(*tail, z) * std::sqrt(gamma(*tail, z)));
  }
  return sup;
}

/// Throws GammaTooFat unless alpha_m sqrt(gamma_m) decays at infinity.
inline void require_decaying_proxy(const Context& ctx) {
  const auto tail = ctx.graph.unbounded_edge();
  if (!tail) throw Error(ErrorCode::NoUnboundedEdge, "truncation sweep needs an unbounded edge");
  const auto gamma = make_gamma(ctx);
  auto f = [&](double z) { return ctx.field.alpha(*tail, z) * std::sqrt(gamma(*tail, z)); };
  const double a = f(1e4), b = f(1e5), c = f(1e6);
  if (!(b < 0.9 * a && c < 0.9 * b)) {
    throw Error(ErrorCode::GammaTooFat,
                "alpha sqrt(gamma) does not decay (values " + detail::fmt(a) + ", " +
                    detail::fmt(b) + ", " + detail::fmt(c) + " at z = 1e4, 1e5, 1e6)");
  }
}

/// E|u^{R_ref} - u^R|^2_{beta gamma} against the largest R, u^R extended
/// by its frozen initial data beyond R + 1.
inline ErrorReport run_truncation_sweep(const Context& ctx) {
  const auto& cfg = ctx.cfg;
  if (cfg.R.size() < 2) throw Error(ErrorCode::InsufficientLevels, "trunc-sweep needs >= 2 R values");
  if (cfg.h.empty()) throw Error(ErrorCode::InvalidConfig, "trunc-sweep needs h");
  require_decaying_proxy(ctx);
  const double delta = cfg.delta.empty() ? 0.0 : cfg.delta.front();
  const double h = cfg.h.front();
  const double dt = time_step(cfg, h);
  const std::size_t L = cfg.R.size() - 1;
  std::vector<Discretization> ds;
  std::vector<FemSpace> spaces;
  std::vector<ProblemInstance> inst;
  for (double R : cfg.R) {
    ds.push_back(discretize(ctx, R, delta));
    spaces.push_back(build_space(ds.back().compact, h));
    inst.push_back(make_level(ctx, ds.back(), spaces.back(), dt));
  }
  const FemSpace& ref_space = spaces.back();
  const ProblemInstance& ref = inst.back();
  const std::size_t tail = ds.back().tg->clipped_edge();
  // map every reference dof to a level dof (or to the frozen tail)
  const auto ref_pts = ref_space.dof_points();
  std::vector<std::vector<long>> map(L);
  for (std::size_t l = 0; l < L; ++l) {
    const auto& sp = spaces[l];
    const double top = cfg.R[l] + 1.0;
    map[l].assign(ref_pts.size(), -1);
    for (std::size_t i = 0; i < ref_pts.size(); ++i) {
      const auto [k, z] = ref_pts[i];
      if (k == tail && z > top * (1 + 1e-12)) continue;
      const auto& e = sp.graph().edges()[k];
      const double pos = (z - e.a) / sp.h(k);
      const auto j = static_cast<std::size_t>(std::llround(pos));
      if (std::abs(pos - static_cast<double>(j)) > 1e-8) {
        throw Error(ErrorCode::NonNestedMeshes, "truncation meshes are not aligned");
      }
      map[l][i] = static_cast<long>(sp.node_dof(k, j));
    }
  }
  const bool stochastic = ref.stochastic();
  auto table = detail::run_seeds(cfg, stochastic, L, [&](std::uint64_t seed,
                                                         std::vector<double>& secs) {
    const auto s = detail::stream_for(ctx, seed, dt);
    const Vector uref = integrate(ref, &s, 1u << 30).final();
    std::vector<double> err2(L);
    for (std::size_t l = 0; l < L; ++l) {
      const auto t0 = detail::Clock::now();
      const Vector u = integrate(inst[l], &s, 1u << 30).final();
      Vector ext(uref.size());
      for (std::size_t i = 0; i < ref_pts.size(); ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        ext[ii] = map[l][i] >= 0 ? u[map[l][i]] : ref.u0[ii];
      }
      const Vector dlt = uref - ext;
      err2[l] = std::max(0.0, dlt.dot(ref.ops.M * dlt));
      secs[l] += detail::seconds_since(t0);
    }
    return err2;
  });
  ErrorReport r;
  r.experiment = "trunc-sweep";
  r.param_name = "R";
  r.failures = table.failures;
  std::vector<double> ratio;
  for (std::size_t l = 0; l < L; ++l) {
    const auto s = summarize(detail::column(table, l));
    const double B = truncation_bound_proxy(ctx, cfg.R[l]);
    LevelResult lr;
    lr.param = cfg.R[l];
    lr.error = std::sqrt(s.mean);
    lr.stderr_ = stochastic && s.mean > 0 ? s.stderr_ / (2.0 * lr.error) : 0.0;
    lr.seeds = s.ok;
    lr.wallclock = table.seconds[l];
    lr.extra = {{"error2", s.mean},
                {"error2_stderr", stochastic ? s.stderr_ : 0.0},
                {"B", B},
                {"error2_over_B", s.mean / B}};
    ratio.push_back(s.mean / B);
    r.levels.push_back(lr);
  }
  bool decreasing = true;
  for (std::size_t l = 0; l + 1 < L; ++l) decreasing &= r.levels[l + 1].error < r.levels[l].error;
  const double band = *std::max_element(ratio.begin(), ratio.end()) /
                      *std::min_element(ratio.begin(), ratio.end());
  r.metrics = {{"R_ref", cfg.R.back()},
               {"h", h},
               {"delta", delta},
               {"strictly_decreasing", decreasing ? 1.0 : 0.0},
               {"band", band}};
  r.pass = decreasing && band <= 10.0;
  return r;
}

// ---------------------------------------------------------------------------
// Validation suite
// ---------------------------------------------------------------------------

struct CheckResult {
  std::string name;
  bool pass = false;
  bool skipped = false;
  double value = 0.0;
  std::string detail;
};

struct ValidationReport {
  std::vector<CheckResult> checks;
  bool pass() const {
    for (const auto& c : checks) {
      if (!c.skipped && !c.pass) return false;
    }
    return true;
  }
  const CheckResult& check(const std::string& name) const {
    for (const auto& c : checks) {
      if (c.name == name) return c;
    }
    throw Error(ErrorCode::PreconditionViolated, "no check " + name);
  }
};

inline void write_validation_csv(std::ostream& os, const ValidationReport& r) {
  os << "check,pass,skipped,value,detail\n";
  for (const auto& c : r.checks) {
    os << c.name << ',' << (c.pass ? 1 : 0) << ',' << (c.skipped ? 1 : 0) << ','
       << detail::fmt(c.value) << ",\"" << c.detail << "\"\n";
  }
}

namespace detail {

/// max over smooth random trial functions of (v, v)_M / (|v|_{M_delta} |v|_S).
inline double interpolation_constant(const FemSpace& s, const AssembledOperators& ops,
                                     std::uint64_t seed) {
  double c = 0.0;
  for (std::uint64_t trial = 0; trial < 50; ++trial) {
    auto u = [&](std::uint64_t i) {
      return 2.0 * (0.5 + 0.5 * keyed_normal(seed, trial, 7, i) / 4.0) - 1.0;
    };
    const double a1 = u(0), a2 = u(1), a3 = u(2), f1 = 1.0 + 3.0 * std::abs(u(3));
    GraphFunction f = [=](std::size_t, double z) {
      return a1 + a2 * std::cos(f1 * z) + a3 * std::sin(2.0 * f1 * z);
    };
    const Vector v = interpolate(s, f);
    const double m = v.dot(ops.M * v);
    const double md = std::sqrt(v.dot(ops.M_delta * v));
    const double sv = std::sqrt(v.dot(ops.S * v));
    if (md > 0 && sv > 0) c = std::max(c, m / (md * sv));
  }
  return c;
}

}  // namespace detail

/// Coercivity, KL bound, symmetry of A (gamma = 1), interpolation
/// inequality stability, regularization bounds, weight compatibility and
/// mass conservation at the first (R, delta, h) of the config.
inline ValidationReport run_validation_suite(const Context& ctx) {
  const auto& cfg = ctx.cfg;
  ValidationReport rep;
  const double R = cfg.R.empty() ? 0.0 : cfg.R.front();
  const double delta = cfg.delta.empty() ? 0.0 : cfg.delta.front();
  const double h = cfg.h.empty() ? 1.0 / 32 : cfg.h.front();
  const auto d = discretize(ctx, R, delta);
  const auto gamma = make_gamma(ctx);
  const FemSpace space = build_space(d.compact, h);
  const auto ops = assemble(space, d.coeffs);

  // weight compatibility
  double kappa1 = 0.0;
  {
    CheckResult c;
    c.name = "weight_compatibility";
    const auto w = d.pair ? validate_weight_compatibility(*d.pair, gamma)
                          : validate_weight_compatibility(d.compact, d.coeffs.alpha,
                                                          d.coeffs.beta_delta, gamma);
    kappa1 = w.kappa;
    c.pass = w.pass;
    c.value = w.kappa;
    c.detail = "kappa1 refinement ratio " + detail::fmt(w.refinement_ratio);
    rep.checks.push_back(c);
  }
  // coercivity
  {
    CheckResult c;
    c.name = "coercivity";
    const double eps = 1e-3;
    const double lambda = std::max(kappa1, eps) / 8.0 * (1.0 + eps);
    const auto n = static_cast<Eigen::Index>(space.dim());
    std::size_t violations = 0;
    double worst = kInfinity;
    for (std::size_t t = 0; t < cfg.coercivity_vectors; ++t) {
      Vector v(n);
      for (Eigen::Index i = 0; i < n; ++i) {
        v[i] = detail::keyed_normal(cfg.seed, t, 11, static_cast<std::uint64_t>(i));
      }
      const double q = lambda * v.dot(ops.M_delta * v) - v.dot(ops.A * v);
      worst = std::min(worst, q / v.dot(ops.M_delta * v));
      violations += q < 0.0;
    }
    c.pass = violations == 0;
    c.value = static_cast<double>(violations);
    c.detail = std::to_string(cfg.coercivity_vectors) + " vectors, lambda = " +
               detail::fmt(lambda) + ", min Rayleigh quotient " + detail::fmt(worst);
    rep.checks.push_back(c);
  }
  // KL bound
  {
    CheckResult c;
    c.name = "kl_bound";
    const auto k = check_kl_bound(ctx.noise, ctx.graph);
    c.pass = k.pass();
    c.value = static_cast<double>(k.violations);
    c.detail = "max sum e_j^2 = " + detail::fmt(k.max_sum) + " against " + detail::fmt(k.bound) +
               " at " + std::to_string(k.points) + " points";
    rep.checks.push_back(c);
  }
  // symmetry of A when gamma = 1
  {
    CheckResult c;
    c.name = "a_symmetry";
    if (gamma.kind() != WeightFamilyKind::Unit) {
      c.skipped = true;
      c.pass = true;
      c.detail = "gamma is not identically 1";
    } else {
      const SparseMatrix diff = ops.A - SparseMatrix(ops.A.transpose());
      c.value = max_abs(diff) / std::max(max_abs(ops.A), 1e-300);
      c.pass = c.value <= 1e-12;
      c.detail = "relative max |A - A^T|";
    }
    rep.checks.push_back(c);
  }
  // interpolation inequality constant across one halving
  {
    CheckResult c;
    c.name = "interpolation_inequality";
    const double c1 = detail::interpolation_constant(space, ops, cfg.seed);
    const FemSpace fine = space.refined();
    const double c2 = detail::interpolation_constant(fine, assemble(fine, d.coeffs), cfg.seed);
    c.value = std::max(c1, c2) / std::min(c1, c2);
    c.pass = c.value <= 1.5;
    c.detail = "constants " + detail::fmt(c1) + ", " + detail::fmt(c2);
    rep.checks.push_back(c);
  }
  // regularization bounds
  {
    CheckResult c;
    c.name = "regularization";
    if (!d.pair) {
      c.skipped = true;
      c.pass = true;
      c.detail = "no regularization configured";
    } else {
      GraphFunction beta_reg;
      if (cfg.inject_bad_regularizer) {
        auto bd = d.pair->beta_function();
        const double floor = 0.5;
        beta_reg = [bd, floor](std::size_t k, double z) { return floor * bd(k, z); };
      }
      const auto r = check_regularization(*d.pair, ctx.field, {}, beta_reg);
      c.pass = r.pass;
      c.value = r.c1;
      c.detail = "c1 " + detail::fmt(r.c1) + ", c3 " + detail::fmt(r.c3) + ", c5 " +
                 detail::fmt(r.c5) + ", beta lower violations " +
                 std::to_string(r.beta_lower_violations);
    }
    rep.checks.push_back(c);
  }
  // conservation with gamma = 1, b = g = 0
  {
    CheckResult c;
    c.name = "conservation";
    auto unit_ctx = ctx;
    unit_ctx.cfg.gamma.family = "unit";
    const auto du = discretize(unit_ctx, R, delta);
    InstanceOptions opt;
    opt.T = 1.0;
    opt.dt = 1e-3;
    auto p = make_instance(space, du.coeffs, ctx.noise, ctx.u0, opt);
    const Vector w = p.ops.M_delta.transpose() * Vector::Ones(p.u0.size());
    const double m0 = w.dot(p.u0);
    Vector u = p.u0;
    double drift = 0.0;
    for (std::size_t i = 0; i < 1000; ++i) {
      u = step_semi_implicit(p, u, Vector());
      drift = std::max(drift, std::abs(w.dot(u) - m0));
    }
    c.value = drift / std::max(std::abs(m0), 1e-300);
    c.pass = c.value <= 1e-10;
    c.detail = "relative drift of total mass over 1000 steps";
    rep.checks.push_back(c);
  }
  return rep;
}

}  // namespace gspde
