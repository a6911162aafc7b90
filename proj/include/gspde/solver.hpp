#pragma once

// Drift-implicit Euler-Maruyama for the semi-discrete equation
//   (M_delta - dt A) u+ = M_delta u + dt M_eta b(u) + sum_j dW_j E_j g(u)
// plus error norms between nested meshes and Monte Carlo ensembles.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <deque>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "gspde/error.hpp"
#include "gspde/fem.hpp"
#include "gspde/noise.hpp"

namespace gspde {

struct ProblemInstance {
  FemSpace space;
  AssembledOperators ops;
  SparseMatrix drift_mass;  // weight beta^delta gamma eta_R
  DiffusionOperator diffusion;
  Nonlinearity b = make_nonlinearity("zero");
  Nonlinearity g = make_nonlinearity("zero");
  Vector u0;
  double T = 0.0;
  double dt = 0.0;
  // metadata
  double delta = 0.0;
  double R = 0.0;

  std::shared_ptr<ShiftedSolver> solver;

  std::size_t steps() const {
    if (T == 0.0) return 0;
    return static_cast<std::size_t>(std::llround(T / dt));
  }
  bool stochastic() const { return !g.is_zero && diffusion.J() > 0; }
};

struct InstanceOptions {
  Nonlinearity b = make_nonlinearity("zero");
  Nonlinearity g = make_nonlinearity("zero");
  std::function<double(double)> eta;  // cut-off in z; empty = 1
  double T = 0.0;
  double dt = 0.0;
  double delta = 0.0;
  double R = 0.0;
};

namespace detail {

inline void check_time_grid(double T, double dt) {
  if (T == 0.0) return;
  if (!(T > 0.0) || !(dt > 0.0) || dt > T * (1.0 + 1e-12)) {
    throw Error(ErrorCode::InvalidConfig, "need 0 < dt <= T");
  }
  const double n = std::round(T / dt);
  if (std::abs(n * dt - T) > 1e-9 * T) {
    throw Error(ErrorCode::InvalidConfig, "T must be a multiple of dt");
  }
}

}  // namespace detail

/// Instance from explicit matrices (u0 given as a dof vector).
inline ProblemInstance make_instance(AssembledOperators ops, SparseMatrix drift_mass,
                                     DiffusionOperator diffusion, Vector u0,
                                     const InstanceOptions& opt, FemSpace space = {}) {
  detail::check_time_grid(opt.T, opt.dt);
  ProblemInstance p;
  p.space = std::move(space);
  p.ops = std::move(ops);
  p.drift_mass = std::move(drift_mass);
  p.diffusion = std::move(diffusion);
  p.b = opt.b;
  p.g = opt.g;
  p.u0 = std::move(u0);
  p.T = opt.T;
  p.dt = opt.dt;
  p.delta = opt.delta;
  p.R = opt.R;
  p.solver = std::make_shared<ShiftedSolver>(p.ops);
  return p;
}

/// Assembles everything on `space`; u0 enters through the L2 projection.
inline ProblemInstance make_instance(const FemSpace& space, const FormCoefficients& c,
                                     const NoiseModel& noise, const GraphFunction& u0,
                                     const InstanceOptions& opt) {
  auto ops = assemble(space, c);
  SparseMatrix drift = opt.eta ? weighted_mass(space,
                                               [&](std::size_t k, double z) {
                                                 return c.beta_delta(k, z) * c.gamma(k, z) *
                                                        opt.eta(z);
                                               })
                               : ops.M_delta;
  DiffusionOperator diffusion =
      opt.g.is_zero ? DiffusionOperator() : DiffusionOperator(space, c, noise, opt.eta);
  Vector v0 = l2_project(space, ops, c, u0);
  return make_instance(std::move(ops), std::move(drift), std::move(diffusion), std::move(v0), opt,
                       space);
}

/// One step; dW may be empty for deterministic instances.
inline Vector step_semi_implicit(const ProblemInstance& p, const Vector& u, const Vector& dW,
                                 double dt) {
  Vector rhs = p.ops.M_delta * u;
  if (!p.b.is_zero) rhs += dt * (p.drift_mass * apply_nodal(p.b, u));
  if (p.stochastic()) rhs += p.diffusion.load(p.g, u, dW);
  if (!rhs.allFinite()) throw Error(ErrorCode::NonFinite, "right-hand side is not finite");
  // (M - dt A) x = rhs  <=>  (M/dt - A) x = rhs/dt
  return p.solver->solve(1.0 / dt, rhs / dt);
}

inline Vector step_semi_implicit(const ProblemInstance& p, const Vector& u, const Vector& dW) {
  return step_semi_implicit(p, u, dW, p.dt);
}

struct Trajectory {
  std::vector<double> times;
  std::vector<Vector> states;
  double h = 0.0;
  double delta = 0.0;
  double R = 0.0;
  std::optional<std::uint64_t> seed;

  const Vector& final() const { return states.back(); }
};

/// Runs to T, keeping every `save_every`-th state (and always the last).
inline Trajectory integrate(const ProblemInstance& p, const NoiseIncrementStream* stream = nullptr,
                            std::size_t save_every = 1) {
  const std::size_t n = p.steps();
  if (p.stochastic()) {
    if (!stream) throw Error(ErrorCode::PreconditionViolated, "stochastic run needs a stream");
    if (stream->steps() != n || stream->J() != p.diffusion.J()) {
      throw Error(ErrorCode::PreconditionViolated,
                  "stream has " + std::to_string(stream->steps()) + " steps and J = " +
                      std::to_string(stream->J()) + ", instance needs " + std::to_string(n) +
                      " and J = " + std::to_string(p.diffusion.J()));
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (std::abs(stream->dt(i) - p.dt) > 1e-9 * p.dt) {
        throw Error(ErrorCode::PreconditionViolated, "stream grid does not match dt");
      }
    }
  }
  if (save_every == 0) save_every = 1;
  Trajectory tr;
  tr.h = p.space.dim() > 0 ? p.space.h_max() : 0.0;
  tr.delta = p.delta;
  tr.R = p.R;
  if (stream && p.stochastic()) tr.seed = stream->seed();
  tr.times.push_back(0.0);
  tr.states.push_back(p.u0);
  Vector u = p.u0;
  std::deque<double> history;
  const Vector none;
  for (std::size_t i = 0; i < n; ++i) {
    const Vector dW = p.stochastic() ? stream->increments(i) : none;
    double norm = std::nan("");
    try {
      u = step_semi_implicit(p, u, dW);
      norm = u.norm();
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NonFinite) throw;
    }
    history.push_back(norm);
    if (history.size() > 5) history.pop_front();
    if (!std::isfinite(norm)) {
      std::ostringstream os;
      os << "step " << i + 1 << ", recent norms:";
      for (double h : history) os << ' ' << h;
      throw Error(ErrorCode::NonFinite, os.str());
    }
    if ((i + 1) % save_every == 0 || i + 1 == n) {
      tr.times.push_back(static_cast<double>(i + 1) * p.dt);
      tr.states.push_back(u);
    }
  }
  return tr;
}

/// CSV: t, dof_0..dof_{N-1}.
inline void write_trajectory_csv(std::ostream& os, const Trajectory& tr) {
  os << 't';
  const auto n = tr.states.empty() ? 0 : tr.states.front().size();
  for (Eigen::Index i = 0; i < n; ++i) os << ",dof_" << i;
  os << '\n' << std::setprecision(17);
  for (std::size_t s = 0; s < tr.states.size(); ++s) {
    os << tr.times[s];
    for (Eigen::Index i = 0; i < n; ++i) os << ',' << tr.states[s][i];
    os << '\n';
  }
}

/// Binary: uint64 rows, uint64 cols (1 + dofs), then row-major float64,
/// all little-endian.
inline void write_trajectory_binary(std::ostream& os, const Trajectory& tr) {
  auto put_u64 = [&](std::uint64_t v) {
    for (int b = 0; b < 8; ++b) os.put(static_cast<char>((v >> (8 * b)) & 0xff));
  };
  auto put_f64 = [&](double d) {
    std::uint64_t v;
    std::memcpy(&v, &d, sizeof v);
    put_u64(v);
  };
  const std::uint64_t n = tr.states.empty() ? 0 : static_cast<std::uint64_t>(tr.states[0].size());
  put_u64(tr.states.size());
  put_u64(n + 1);
  for (std::size_t s = 0; s < tr.states.size(); ++s) {
    put_f64(tr.times[s]);
    for (std::uint64_t i = 0; i < n; ++i) put_f64(tr.states[s][static_cast<Eigen::Index>(i)]);
  }
}

// ---------------------------------------------------------------------------
// Errors between nested meshes
// ---------------------------------------------------------------------------

/// P1 injection of a coarse function into a finer nested space.
inline Vector lift(const FemSpace& fine, const FemSpace& coarse, const Vector& u) {
  if (!fine.refines(coarse)) {
    throw Error(ErrorCode::NonNestedMeshes, "coarse nodes are not nodes of the fine mesh");
  }
  Vector out(static_cast<Eigen::Index>(fine.dim()));
  const auto pts = fine.dof_points();
  for (std::size_t i = 0; i < pts.size(); ++i) {
    out[static_cast<Eigen::Index>(i)] = evaluate(coarse, u, pts[i].first, pts[i].second);
  }
  return out;
}

/// ||u_fine - lift(u_coarse)|| with the fine-mesh mass matrix `mass`
/// (M for beta gamma, M_delta for beta^delta gamma).
inline double weighted_error(const FemSpace& fine, const Vector& u_fine, const FemSpace& coarse,
                             const Vector& u_coarse, const SparseMatrix& mass) {
  const Vector d = u_fine - lift(fine, coarse, u_coarse);
  return std::sqrt(std::max(0.0, d.dot(mass * d)));
}

// ---------------------------------------------------------------------------
// Monte Carlo
// ---------------------------------------------------------------------------

struct EnsembleStats {
  std::vector<double> values;  // per seed, NaN where the seed failed
  std::vector<std::string> failures;
  std::size_t ok = 0;
  double mean = 0.0;
  double stderr_ = 0.0;  // of the mean
  double rms = 0.0;
  double rms_stderr = 0.0;
  double ci95_lo = 0.0;
  double ci95_hi = 0.0;
};

inline std::size_t default_threads() {
  return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

/// Runs body(i) for i < n on `threads` workers.
inline void parallel_for(std::size_t n, std::size_t threads,
                         const std::function<void(std::size_t)>& body) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) body(i);
    });
  }
  for (auto& th : pool) th.join();
}

inline EnsembleStats summarize(std::vector<double> values, std::vector<std::string> failures = {}) {
  EnsembleStats s;
  s.values = std::move(values);
  s.failures = std::move(failures);
  double sum = 0.0, sum2 = 0.0;
  for (double v : s.values) {
    if (!std::isfinite(v)) continue;
    ++s.ok;
    sum += v;
    sum2 += v * v;
  }
  if (s.ok == 0) return s;
  const double n = static_cast<double>(s.ok);
  s.mean = sum / n;
  double var = 0.0;
  for (double v : s.values) {
    if (std::isfinite(v)) var += (v - s.mean) * (v - s.mean);
  }
  var = s.ok > 1 ? var / (n - 1.0) : 0.0;
  s.stderr_ = std::sqrt(var / n);
  s.rms = std::sqrt(sum2 / n);
  // delta method on sqrt(mean of squares)
  double var2 = 0.0;
  const double ms = sum2 / n;
  for (double v : s.values) {
    if (std::isfinite(v)) var2 += (v * v - ms) * (v * v - ms);
  }
  var2 = s.ok > 1 ? var2 / (n - 1.0) : 0.0;
  s.rms_stderr = s.rms > 0.0 ? std::sqrt(var2 / n) / (2.0 * s.rms) : 0.0;
  s.ci95_lo = s.mean - 1.96 * s.stderr_;
  s.ci95_hi = s.mean + 1.96 * s.stderr_;
  return s;
}

/// Observable per seed; failing seeds are recorded and skipped.
inline EnsembleStats mc_ensemble(const std::vector<std::uint64_t>& seeds,
                                 const std::function<double(std::uint64_t)>& observable,
                                 std::size_t threads = default_threads()) {
  if (seeds.size() < 2) throw Error(ErrorCode::InsufficientSeeds, "ensemble needs >= 2 seeds");
  std::vector<double> values(seeds.size(), std::nan(""));
  std::vector<std::string> errors(seeds.size());
  parallel_for(seeds.size(), threads, [&](std::size_t i) {
    try {
      values[i] = observable(seeds[i]);
    } catch (const std::exception& e) {
      errors[i] = "seed " + std::to_string(seeds[i]) + ": " + e.what();
    }
  });
  std::vector<std::string> failures;
  for (auto& e : errors) {
    if (!e.empty()) failures.push_back(std::move(e));
  }
  auto s = summarize(std::move(values), std::move(failures));
  if (s.ok < 2) {
    throw Error(ErrorCode::InsufficientSeeds,
                "fewer than 2 seeds succeeded" +
                    (s.failures.empty() ? std::string() : ": " + s.failures.front()));
  }
  return s;
}

inline std::vector<std::uint64_t> seed_list(std::uint64_t base, std::size_t n) {
  std::vector<std::uint64_t> s(n);
  for (std::size_t i = 0; i < n; ++i) s[i] = base + i;
  return s;
}

}  // namespace gspde
