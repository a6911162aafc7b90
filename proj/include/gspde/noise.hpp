#pragma once

// Q-Wiener noise on a graph: a finite Karhunen-Loeve basis e_1..e_J and the
// Brownian motions driving it.

#include <cmath>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "gspde/coefficients.hpp"
#include "gspde/error.hpp"
#include "gspde/fem.hpp"
#include "gspde/graph.hpp"
#include "gspde/hamiltonian.hpp"

namespace gspde {

enum class NoiseMode { Direct, SpectralAtoms };

struct Atom {
  Vec2 xi = Vec2::Zero();
  double weight = 0.0;
};

struct KlBoundCheck {
  double bound = 0.0;
  double max_sum = 0.0;   // max over grid of sum_j e_j^2
  std::size_t points = 0;
  std::size_t violations = 0;
  std::size_t worst_edge = 0;
  double worst_z = 0.0;
  bool pass() const { return violations == 0; }
};

class NoiseModel {
 public:
  NoiseModel() = default;
  NoiseModel(NoiseMode mode, std::vector<GraphFunction> basis, double bound,
             std::vector<Atom> atoms = {})
      : mode_(mode), basis_(std::move(basis)), bound_(bound), atoms_(std::move(atoms)) {}

  NoiseMode mode() const { return mode_; }
  std::size_t J() const { return basis_.size(); }
  const GraphFunction& basis(std::size_t j) const { return basis_.at(j); }
  const std::vector<GraphFunction>& basis() const { return basis_; }
  /// mu(R^2) in spectral mode, the user constant in direct mode.
  double bound() const { return bound_; }
  const std::vector<Atom>& atoms() const { return atoms_; }

  double operator()(std::size_t j, std::size_t k, double z) const { return basis_[j](k, z); }

  double square_sum(std::size_t k, double z) const {
    double s = 0.0;
    for (const auto& e : basis_) {
      const double v = e(k, z);
      s += v * v;
    }
    return s;
  }

 private:
  NoiseMode mode_ = NoiseMode::Direct;
  std::vector<GraphFunction> basis_;
  double bound_ = 0.0;
  std::vector<Atom> atoms_;
};

/// Uniform check grid: `per_edge` points on each edge, the unbounded edge
/// sampled over [H0, H0 + tail_span].
inline std::vector<std::pair<std::size_t, double>> check_grid(const MetricGraph& g,
                                                              std::size_t per_edge = 64,
                                                              double tail_span = 10.0) {
  std::vector<std::pair<std::size_t, double>> pts;
  for (std::size_t k = 0; k < g.num_edges(); ++k) {
    const Edge& e = g.edges()[k];
    const double hi = e.bounded() ? e.b : e.a + tail_span;
    for (std::size_t i = 0; i < per_edge; ++i) {
      pts.emplace_back(k, e.a + (hi - e.a) * static_cast<double>(i) / (per_edge - 1));
    }
  }
  return pts;
}

inline KlBoundCheck check_kl_bound(const NoiseModel& model,
                                   const std::vector<std::pair<std::size_t, double>>& points,
                                   double bound, double tol = 1e-9) {
  KlBoundCheck r;
  r.bound = bound;
  for (const auto& [k, z] : points) {
    const double s = model.square_sum(k, z);
    ++r.points;
    if (s > r.max_sum) {
      r.max_sum = s;
      r.worst_edge = k;
      r.worst_z = z;
    }
    if (!(s <= bound + tol * std::max(1.0, bound))) ++r.violations;
  }
  return r;
}

inline KlBoundCheck check_kl_bound(const NoiseModel& model, const MetricGraph& g) {
  return check_kl_bound(model, check_grid(g), model.bound());
}

namespace detail {

inline void require_bound(const KlBoundCheck& c) {
  if (!c.pass()) {
    throw Error(ErrorCode::BoundViolated,
                "sum e_j^2 = " + std::to_string(c.max_sum) + " > " + std::to_string(c.bound) +
                    " at edge " + std::to_string(c.worst_edge) + ", z = " +
                    std::to_string(c.worst_z));
  }
}

}  // namespace detail

/// User basis with a user bound; the bound is checked on a grid.
inline NoiseModel build_direct_noise(const MetricGraph& g, std::vector<GraphFunction> basis,
                                     double bound) {
  if (basis.empty()) throw Error(ErrorCode::InvalidConfig, "noise basis needs J >= 1");
  for (std::size_t j = 0; j < basis.size(); ++j) {
    for (std::size_t pos = 0; pos < g.num_vertices(); ++pos) {
      const Vertex& v = g.vertices()[pos];
      if (v.kind != VertexKind::Interior) continue;
      double lo = kInfinity, hi = -kInfinity;
      for (const auto& inc : g.incident(pos)) {
        const double val = basis[j](inc.edge, v.z);
        lo = std::min(lo, val);
        hi = std::max(hi, val);
      }
      if (hi - lo > 1e-8 * std::max(1.0, std::abs(hi))) {
        throw Error(ErrorCode::PreconditionViolated,
                    "basis function " + std::to_string(j + 1) +
                        " is discontinuous at vertex " + std::to_string(v.id));
      }
    }
  }
  NoiseModel m(NoiseMode::Direct, std::move(basis), bound);
  detail::require_bound(check_kl_bound(m, g));
  return m;
}

namespace detail {

inline bool same_xi(const Vec2& a, const Vec2& b) {
  return (a - b).norm() <= 1e-12 * std::max(1.0, a.norm());
}

/// Real basis for a symmetric atomic measure: sqrt(w) for xi = 0 and
/// sqrt(2w) cos(x.xi), sqrt(2w) sin(x.xi) for each pair +-xi.
inline std::vector<std::function<double(const Vec2&)>> atom_basis(const std::vector<Atom>& atoms) {
  std::vector<bool> used(atoms.size(), false);
  std::vector<std::function<double(const Vec2&)>> out;
  for (std::size_t i = 0; i < atoms.size(); ++i) {
    if (used[i]) continue;
    const Atom a = atoms[i];
    if (!(a.weight > 0.0)) throw Error(ErrorCode::InvalidConfig, "atom weights must be positive");
    used[i] = true;
    if (a.xi.norm() == 0.0) {
      const double s = std::sqrt(a.weight);
      out.emplace_back([s](const Vec2&) { return s; });
      continue;
    }
    std::size_t partner = atoms.size();
    for (std::size_t j = i + 1; j < atoms.size(); ++j) {
      if (!used[j] && same_xi(atoms[j].xi, -a.xi)) {
        partner = j;
        break;
      }
    }
    if (partner == atoms.size() ||
        std::abs(atoms[partner].weight - a.weight) > 1e-12 * a.weight) {
      throw Error(ErrorCode::AsymmetricAtoms, "atom at (" + std::to_string(a.xi.x()) + ", " +
                                                  std::to_string(a.xi.y()) +
                                                  ") has no mirror atom of equal weight");
    }
    used[partner] = true;
    const double s = std::sqrt(2.0 * a.weight);
    const Vec2 xi = a.xi;
    out.emplace_back([s, xi](const Vec2& x) { return s * std::cos(x.dot(xi)); });
    out.emplace_back([s, xi](const Vec2& x) { return s * std::sin(x.dot(xi)); });
  }
  return out;
}

}  // namespace detail

/// Atom basis projected onto the Reeb graph (level-set averages), tabulated
/// at the same levels as the coefficients.
inline NoiseModel build_spectral_noise(const HamiltonianSpec& spec, const ReebGraph& reeb,
                                       const std::vector<Atom>& atoms,
                                       const TabulationOptions& opt = {}) {
  if (atoms.empty()) throw Error(ErrorCode::InvalidConfig, "no atoms");
  const auto plane = detail::atom_basis(atoms);
  double mass = 0.0;
  for (const auto& a : atoms) mass += a.weight;
  const std::size_t J = plane.size();
  std::vector<std::vector<TabulatedProfile>> profiles(J);
  std::vector<std::pair<std::size_t, double>> grid;
  for (std::size_t k = 0; k < reeb.graph.num_edges(); ++k) {
    const Edge& e = reeb.graph.edges()[k];
    const auto zs = sample_levels(spec, e, opt);
    std::vector<std::vector<double>> v(J, std::vector<double>(zs.size()));
    for (std::size_t i = 0; i < zs.size(); ++i) {
      // one trace serves every basis function
      const auto c = trace_level(spec, reeb, k, zs[i], opt.trace);
      const double beta = contour_integrals(spec, c).beta;
      for (std::size_t j = 0; j < J; ++j) {
        v[j][i] = contour_average_numerator(spec, c, plane[j]) / beta;
      }
      grid.emplace_back(k, zs[i]);
    }
    for (std::size_t j = 0; j < J; ++j) {
      profiles[j].emplace_back(zs, v[j], e.a, e.b, AsymptoticClass::Constant,
                               AsymptoticClass::Constant);
    }
  }
  std::vector<GraphFunction> basis;
  for (std::size_t j = 0; j < J; ++j) {
    basis.emplace_back([p = profiles[j]](std::size_t k, double z) { return p[k](z); });
  }
  NoiseModel m(NoiseMode::SpectralAtoms, std::move(basis), mass, atoms);
  detail::require_bound(check_kl_bound(m, grid, mass));
  return m;
}

// ---------------------------------------------------------------------------
// Brownian increments
// ---------------------------------------------------------------------------

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Standard normal keyed by (seed, j, level, index); Box-Muller on two
/// hashed uniforms.
inline double keyed_normal(std::uint64_t seed, std::uint64_t j, std::uint64_t level,
                           std::uint64_t index) {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ j);
  h = splitmix64(h ^ (level << 48) ^ index);
  const std::uint64_t h2 = splitmix64(h);
  const double u1 = (static_cast<double>(h >> 11) + 1.0) * 0x1.0p-53;  // (0, 1]
  const double u2 = static_cast<double>(h2 >> 11) * 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

// Path values are kept as integer multiples of 2^-44 so increments split and
// cumulative sums stay exact in double precision for |W| < 512.
inline constexpr double kPathUnit = 0x1.0p-44;

inline std::int64_t quantize(double w) {
  if (!(std::abs(w) < 500.0)) throw Error(ErrorCode::NonFinite, "Brownian path out of range");
  return static_cast<std::int64_t>(std::llround(w / kPathUnit));
}

}  // namespace detail

class NoiseIncrementStream {
 public:
  NoiseIncrementStream() = default;

  std::uint64_t seed() const { return seed_; }
  std::size_t J() const { return J_; }
  std::size_t level() const { return level_; }
  const std::vector<double>& times() const { return t_; }
  std::size_t steps() const { return t_.empty() ? 0 : t_.size() - 1; }
  double dt(std::size_t n) const { return t_[n + 1] - t_[n]; }

  /// W_j(t_n).
  double path(std::size_t n, std::size_t j) const {
    return static_cast<double>(w_[n * J_ + j]) * detail::kPathUnit;
  }

  /// W_j(t_{n+1}) - W_j(t_n).
  double increment(std::size_t n, std::size_t j) const {
    return static_cast<double>(w_[(n + 1) * J_ + j] - w_[n * J_ + j]) * detail::kPathUnit;
  }

  Vector increments(std::size_t n) const {
    Vector d(static_cast<Eigen::Index>(J_));
    for (std::size_t j = 0; j < J_; ++j) d[static_cast<Eigen::Index>(j)] = increment(n, j);
    return d;
  }

  /// Brownian-bridge refinement: the midpoint of every step is inserted,
  /// existing path values are kept.
  NoiseIncrementStream refined() const {
    NoiseIncrementStream r;
    r.seed_ = seed_;
    r.J_ = J_;
    r.level_ = level_ + 1;
    const std::size_t n = steps();
    r.t_.resize(2 * n + 1);
    r.w_.resize((2 * n + 1) * J_);
    for (std::size_t i = 0; i <= n; ++i) {
      r.t_[2 * i] = t_[i];
      for (std::size_t j = 0; j < J_; ++j) r.w_[2 * i * J_ + j] = w_[i * J_ + j];
    }
    for (std::size_t i = 0; i < n; ++i) {
      const double h = dt(i);
      r.t_[2 * i + 1] = 0.5 * (t_[i] + t_[i + 1]);
      for (std::size_t j = 0; j < J_; ++j) {
        const double mean = 0.5 * (path(i, j) + path(i + 1, j));
        const double z = detail::keyed_normal(seed_, j, r.level_, i);
        r.w_[(2 * i + 1) * J_ + j] = detail::quantize(mean + 0.5 * std::sqrt(h) * z);
      }
    }
    return r;
  }

  NoiseIncrementStream refined(std::size_t times) const {
    NoiseIncrementStream r = *this;
    for (std::size_t i = 0; i < times; ++i) r = r.refined();
    return r;
  }

  friend NoiseIncrementStream sample_increments(std::size_t J, std::uint64_t seed,
                                                const std::vector<double>& t_grid);

 private:
  std::uint64_t seed_ = 0;
  std::size_t J_ = 0;
  std::size_t level_ = 0;
  std::vector<double> t_;
  std::vector<std::int64_t> w_;  // (steps + 1) x J, row major
};

inline NoiseIncrementStream sample_increments(std::size_t J, std::uint64_t seed,
                                              const std::vector<double>& t_grid) {
  if (t_grid.empty()) throw Error(ErrorCode::PreconditionViolated, "empty time grid");
  for (std::size_t i = 1; i < t_grid.size(); ++i) {
    if (!(t_grid[i] > t_grid[i - 1])) {
      throw Error(ErrorCode::PreconditionViolated, "time grid must be strictly increasing");
    }
  }
  NoiseIncrementStream s;
  s.seed_ = seed;
  s.J_ = J;
  s.t_ = t_grid;
  s.w_.assign(t_grid.size() * J, 0);
  for (std::size_t j = 0; j < J; ++j) {
    double w = 0.0;
    for (std::size_t i = 0; i + 1 < t_grid.size(); ++i) {
      w += std::sqrt(t_grid[i + 1] - t_grid[i]) * detail::keyed_normal(seed, j, 0, i);
      s.w_[(i + 1) * J + j] = detail::quantize(w);
      w = static_cast<double>(s.w_[(i + 1) * J + j]) * detail::kPathUnit;
    }
  }
  return s;
}

inline NoiseIncrementStream sample_increments(const NoiseModel& model, std::uint64_t seed,
                                              const std::vector<double>& t_grid) {
  return sample_increments(model.J(), seed, t_grid);
}

/// n equal steps on [0, T].
inline std::vector<double> uniform_grid(double T, std::size_t n) {
  std::vector<double> t(n + 1);
  for (std::size_t i = 0; i <= n; ++i) t[i] = T * static_cast<double>(i) / static_cast<double>(n);
  return t;
}

// ---------------------------------------------------------------------------
// Lipschitz nonlinearities and the diffusion operator
// ---------------------------------------------------------------------------

struct Nonlinearity {
  std::string name;
  std::function<double(double)> f;
  bool is_zero = false;
  double operator()(double u) const { return f(u); }
};

/// zero, one, identity, linear:<c>, affine:<a>:<b>, sin, tanh, bounded
/// (u / sqrt(1 + u^2)).
inline Nonlinearity make_nonlinearity(const std::string& name) {
  auto number = [&](const std::string& s) {
    try {
      std::size_t used = 0;
      const double v = std::stod(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw Error(ErrorCode::InvalidConfig, "bad number in nonlinearity '" + name + "'");
    }
  };
  if (name == "zero") return {name, [](double) { return 0.0; }, true};
  if (name == "one") return {name, [](double) { return 1.0; }};
  if (name == "identity") return {name, [](double u) { return u; }};
  if (name == "sin") return {name, [](double u) { return std::sin(u); }};
  if (name == "tanh") return {name, [](double u) { return std::tanh(u); }};
  if (name == "bounded") return {name, [](double u) { return u / std::sqrt(1.0 + u * u); }};
  if (name.rfind("linear:", 0) == 0) {
    const double c = number(name.substr(7));
    return {name, [c](double u) { return c * u; }, c == 0.0};
  }
  if (name.rfind("affine:", 0) == 0) {
    const auto rest = name.substr(7);
    const auto colon = rest.find(':');
    if (colon == std::string::npos) {
      throw Error(ErrorCode::InvalidConfig, "affine needs affine:<a>:<b>");
    }
    const double a = number(rest.substr(0, colon));
    const double b = number(rest.substr(colon + 1));
    return {name, [a, b](double u) { return a * u + b; }, a == 0.0 && b == 0.0};
  }
  throw Error(ErrorCode::InvalidConfig, "unknown nonlinearity '" + name + "'");
}

inline Vector apply_nodal(const Nonlinearity& g, const Vector& u) {
  return u.unaryExpr([&](double v) { return g(v); });
}

/// E_j[i][l] = int beta^delta gamma eta_R e_j phi_l phi_i, so that
/// sum_j dW_j E_j g(u) is the load of the noise term.
class DiffusionOperator {
 public:
  DiffusionOperator() = default;
  explicit DiffusionOperator(std::vector<SparseMatrix> E) : E_(std::move(E)) {}

  DiffusionOperator(const FemSpace& space, const FormCoefficients& c, const NoiseModel& model,
                    std::function<double(double)> eta = {}) {
    for (std::size_t j = 0; j < model.J(); ++j) {
      const auto& e = model.basis(j);
      E_.push_back(weighted_mass(space, [&](std::size_t k, double z) {
        const double cut = eta ? eta(z) : 1.0;
        return c.beta_delta(k, z) * c.gamma(k, z) * cut * e(k, z);
      }));
    }
  }

  std::size_t J() const { return E_.size(); }
  const SparseMatrix& E(std::size_t j) const { return E_.at(j); }

  /// sum_j dW_j E_j g(u).
  Vector load(const Nonlinearity& g, const Vector& u, const Vector& dW) const {
    Vector out = Vector::Zero(u.size());
    if (g.is_zero) return out;
    const Vector gu = apply_nodal(g, u);
    for (std::size_t j = 0; j < E_.size(); ++j) out += dW[static_cast<Eigen::Index>(j)] * (E_[j] * gu);
    return out;
  }

 private:
  std::vector<SparseMatrix> E_;
};

/// P_h [ sum_j g(u) eta_R e_j dW_j ].
inline Vector apply_diffusion(const AssembledOperators& ops, const DiffusionOperator& d,
                              const Nonlinearity& g, const Vector& u, const Vector& dW) {
  if (g.is_zero) return Vector::Zero(u.size());
  return l2_project(ops, d.load(g, u, dW));
}

/// CSV with header z,k,e_1..e_J on the check grid.
inline void write_basis_csv(std::ostream& os, const NoiseModel& model, const MetricGraph& g,
                            std::size_t per_edge = 64) {
  os << "z,k";
  for (std::size_t j = 0; j < model.J(); ++j) os << ",e_" << j + 1;
  os << '\n' << std::setprecision(17);
  for (const auto& [k, z] : check_grid(g, per_edge)) {
    os << z << ',' << k;
    for (std::size_t j = 0; j < model.J(); ++j) os << ',' << model(j, k, z);
    os << '\n';
  }
}

}  // namespace gspde
