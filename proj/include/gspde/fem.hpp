#pragma once

// P1 finite elements on a compact metric graph. Edge-interior nodes and
// vertex hats share one dof per vertex, so continuity is built in and the
// flux conditions are natural.

#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <boost/math/quadrature/gauss.hpp>

#include <cmath>
#include <iomanip>
#include <map>
#include <memory>
#include <mutex>
#include <ostream>
#include <utility>
#include <vector>

#include "gspde/coefficients.hpp"
#include "gspde/error.hpp"
#include "gspde/graph.hpp"

namespace gspde {

using SparseMatrix = Eigen::SparseMatrix<double>;
using Vector = Eigen::VectorXd;

class FemSpace {
 public:
  FemSpace() = default;

  FemSpace(MetricGraph g, std::vector<std::size_t> elements)
      : graph_(std::move(g)), n_(std::move(elements)) {
    if (!graph_.is_compact()) {
      throw Error(ErrorCode::PreconditionViolated, "finite elements need a compact graph");
    }
    if (n_.size() != graph_.num_edges()) {
      throw Error(ErrorCode::PreconditionViolated, "one element count per edge");
    }
    std::size_t next = 0;
    offset_.resize(n_.size());
    for (std::size_t k = 0; k < n_.size(); ++k) {
      if (n_[k] < 1) throw Error(ErrorCode::MeshTooCoarse, "edge without elements");
      offset_[k] = next;
      next += n_[k] - 1;
    }
    vertex_base_ = next;
    dim_ = next + graph_.num_vertices();
  }

  const MetricGraph& graph() const { return graph_; }
  std::size_t num_edges() const { return n_.size(); }
  std::size_t elements(std::size_t k) const { return n_[k]; }
  const std::vector<std::size_t>& elements() const { return n_; }
  double h(std::size_t k) const { return graph_.edges()[k].length() / static_cast<double>(n_[k]); }
  double h_min() const {
    double m = kInfinity;
    for (std::size_t k = 0; k < n_.size(); ++k) m = std::min(m, h(k));
    return m;
  }
  double h_max() const {
    double m = 0.0;
    for (std::size_t k = 0; k < n_.size(); ++k) m = std::max(m, h(k));
    return m;
  }
  std::size_t dim() const { return dim_; }

  std::size_t vertex_dof(std::size_t vertex_pos) const { return vertex_base_ + vertex_pos; }

  /// Global dof of node j (0..n_k) on edge k.
  std::size_t node_dof(std::size_t k, std::size_t j) const {
    const Edge& e = graph_.edges()[k];
    if (j == 0) return vertex_dof(graph_.vertex_index(e.v_at_a));
    if (j == n_[k]) return vertex_dof(graph_.vertex_index(e.v_at_b));
    return offset_[k] + j - 1;
  }

  double node_z(std::size_t k, std::size_t j) const {
    const Edge& e = graph_.edges()[k];
    if (j == n_[k]) return e.b;
    return e.a + static_cast<double>(j) * h(k);
  }

  /// An (edge, z) representative of every dof.
  std::vector<std::pair<std::size_t, double>> dof_points() const {
    std::vector<std::pair<std::size_t, double>> pts(dim_);
    for (std::size_t k = 0; k < n_.size(); ++k) {
      for (std::size_t j = 0; j <= n_[k]; ++j) pts[node_dof(k, j)] = {k, node_z(k, j)};
    }
    return pts;
  }

  FemSpace refined(std::size_t factor = 2) const {
    std::vector<std::size_t> n = n_;
    for (auto& v : n) v *= factor;
    return FemSpace(graph_, n);
  }

  /// True when every node of `coarse` is a node of this space.
  bool refines(const FemSpace& coarse) const {
    if (coarse.n_.size() != n_.size()) return false;
    for (std::size_t k = 0; k < n_.size(); ++k) {
      if (n_[k] % coarse.n_[k] != 0) return false;
      const Edge& a = graph_.edges()[k];
      const Edge& b = coarse.graph_.edges()[k];
      if (a.a != b.a || a.b != b.b) return false;
    }
    return true;
  }

 private:
  MetricGraph graph_;
  std::vector<std::size_t> n_;
  std::vector<std::size_t> offset_;
  std::size_t vertex_base_ = 0;
  std::size_t dim_ = 0;
};

/// n_k = ceil(|J_k| / target_h).
inline FemSpace build_space(const MetricGraph& compact, double target_h) {
  if (!(target_h > 0.0) || !(target_h < compact.min_edge_length())) {
    throw Error(ErrorCode::MeshTooCoarse, "target h = " + std::to_string(target_h) +
                                              " must be below the shortest edge " +
                                              std::to_string(compact.min_edge_length()));
  }
  std::vector<std::size_t> n;
  for (const auto& e : compact.edges()) {
    n.push_back(static_cast<std::size_t>(std::ceil(e.length() / target_h * (1.0 - 1e-12))));
  }
  return FemSpace(compact, n);
}

inline FemSpace build_space(const TruncatedGraph& tg, double target_h) {
  return build_space(tg.graph(), target_h);
}

// ---------------------------------------------------------------------------
// Quadrature
// ---------------------------------------------------------------------------

struct QuadratureRule {
  std::vector<double> x;  // on [-1, 1]
  std::vector<double> w;
};

template <int N>
QuadratureRule gauss_rule() {
  using G = boost::math::quadrature::gauss<double, N>;
  QuadratureRule r;
  const auto& xs = G::abscissa();
  const auto& ws = G::weights();
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (xs[i] == 0.0) {
      r.x.push_back(0.0);
      r.w.push_back(ws[i]);
      continue;
    }
    r.x.push_back(-xs[i]);
    r.w.push_back(ws[i]);
    r.x.push_back(xs[i]);
    r.w.push_back(ws[i]);
  }
  return r;
}

inline const QuadratureRule& gauss8() {
  static const QuadratureRule r = gauss_rule<8>();
  return r;
}

inline const QuadratureRule& gauss32() {
  static const QuadratureRule r = gauss_rule<32>();
  return r;
}

// ---------------------------------------------------------------------------
// Assembly
// ---------------------------------------------------------------------------

/// Coefficients entering the form and the mass matrices.
struct FormCoefficients {
  GraphFunction alpha;       // alpha^{R,delta}
  GraphFunction beta_delta;  // beta^delta
  GraphFunction beta;        // beta (error norm)
  WeightFunction gamma;
};

inline FormCoefficients form_coefficients(const RegularizedPair& pair, WeightFunction gamma) {
  return {pair.alpha_function(), pair.beta_function(), pair.truncated_field().beta_function(),
          std::move(gamma)};
}

/// Unregularized coefficients used as they are (non-degenerate test cases).
inline FormCoefficients form_coefficients(const CoefficientField& f, WeightFunction gamma) {
  auto b = f.beta_function();
  return {f.alpha_function(), b, b, std::move(gamma)};
}

struct AssembledOperators {
  SparseMatrix M_delta;  // weight beta^delta gamma
  SparseMatrix M;        // weight beta gamma
  SparseMatrix A;        // A[i][j] = -a_0(phi_j, phi_i)
  SparseMatrix S;        // energy: alpha gamma phi' phi' + beta^delta gamma phi phi
};

namespace detail {

/// Elements touching an interior vertex (where beta has a log singularity).
inline bool touches_interior(const FemSpace& s, std::size_t k, std::size_t el) {
  const Edge& e = s.graph().edges()[k];
  if (el == 0 && s.graph().vertex(e.v_at_a).kind == VertexKind::Interior) return true;
  if (el + 1 == s.elements(k) && s.graph().vertex(e.v_at_b).kind == VertexKind::Interior) {
    return true;
  }
  return false;
}

using Triplets = std::vector<Eigen::Triplet<double>>;

inline SparseMatrix from_triplets(std::size_t n, const Triplets& t) {
  SparseMatrix m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  m.setFromTriplets(t.begin(), t.end());
  m.makeCompressed();
  return m;
}

}  // namespace detail

inline AssembledOperators assemble(const FemSpace& space, const FormCoefficients& c) {
  detail::Triplets tMd, tM, tA, tS;
  const auto& q8 = gauss8();
  const auto& q32 = gauss32();
  for (std::size_t k = 0; k < space.num_edges(); ++k) {
    const double h = space.h(k);
    for (std::size_t el = 0; el < space.elements(k); ++el) {
      const double z0 = space.node_z(k, el);
      const double z1 = space.node_z(k, el + 1);
      const std::size_t dofs[2] = {space.node_dof(k, el), space.node_dof(k, el + 1)};
      double md[2][2] = {}, m[2][2] = {}, a[2][2] = {}, s[2][2] = {};
      const double dphi[2] = {-1.0 / h, 1.0 / h};
      for (std::size_t q = 0; q < q8.x.size(); ++q) {
        const double z = 0.5 * (z0 + z1) + 0.5 * h * q8.x[q];
        const double w = 0.5 * h * q8.w[q];
        const double phi[2] = {(z1 - z) / h, (z - z0) / h};
        const double al = c.alpha(k, z);
        const double bd = c.beta_delta(k, z);
        const double g = c.gamma(k, z);
        const double dg = c.gamma.derivative(k, z);
        for (int i = 0; i < 2; ++i) {
          for (int j = 0; j < 2; ++j) {
            md[i][j] += w * bd * g * phi[i] * phi[j];
            // row i is the test function, column j the trial function
            a[i][j] -= 0.5 * w * al * dphi[j] * (dphi[i] * g + phi[i] * dg);
            s[i][j] += w * (al * g * dphi[i] * dphi[j] + bd * g * phi[i] * phi[j]);
          }
        }
      }
      const auto& qm = detail::touches_interior(space, k, el) ? q32 : q8;
      for (std::size_t q = 0; q < qm.x.size(); ++q) {
        const double z = 0.5 * (z0 + z1) + 0.5 * h * qm.x[q];
        const double w = 0.5 * h * qm.w[q];
        const double phi[2] = {(z1 - z) / h, (z - z0) / h};
        const double bg = c.beta(k, z) * c.gamma(k, z);
        for (int i = 0; i < 2; ++i) {
          for (int j = 0; j < 2; ++j) m[i][j] += w * bg * phi[i] * phi[j];
        }
      }
      for (int i = 0; i < 2; ++i) {
        for (int j = 0; j < 2; ++j) {
          const auto r = static_cast<int>(dofs[i]);
          const auto col = static_cast<int>(dofs[j]);
          tMd.emplace_back(r, col, md[i][j]);
          tM.emplace_back(r, col, m[i][j]);
          tA.emplace_back(r, col, a[i][j]);
          tS.emplace_back(r, col, s[i][j]);
        }
      }
    }
  }
  const std::size_t n = space.dim();
  AssembledOperators ops{detail::from_triplets(n, tMd), detail::from_triplets(n, tM),
                         detail::from_triplets(n, tA), detail::from_triplets(n, tS)};
  for (std::size_t i = 0; i < n; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    const double d1 = ops.M_delta.coeff(ii, ii);
    const double d2 = ops.M.coeff(ii, ii);
    if (!(d1 > 0.0) || !(d2 > 0.0)) {
      throw Error(ErrorCode::SingularMass,
                  "non-positive mass diagonal at dof " + std::to_string(i));
    }
  }
  return ops;
}

/// int w phi_i phi_j with an arbitrary weight (8-point Gauss per element).
inline SparseMatrix weighted_mass(const FemSpace& space, const GraphFunction& weight) {
  detail::Triplets t;
  const auto& q8 = gauss8();
  for (std::size_t k = 0; k < space.num_edges(); ++k) {
    const double h = space.h(k);
    for (std::size_t el = 0; el < space.elements(k); ++el) {
      const double z0 = space.node_z(k, el);
      const double z1 = space.node_z(k, el + 1);
      double m[2][2] = {};
      for (std::size_t q = 0; q < q8.x.size(); ++q) {
        const double z = 0.5 * (z0 + z1) + 0.5 * h * q8.x[q];
        const double w = 0.5 * h * q8.w[q] * weight(k, z);
        const double phi[2] = {(z1 - z) / h, (z - z0) / h};
        for (int i = 0; i < 2; ++i) {
          for (int j = 0; j < 2; ++j) m[i][j] += w * phi[i] * phi[j];
        }
      }
      const std::size_t dofs[2] = {space.node_dof(k, el), space.node_dof(k, el + 1)};
      for (int i = 0; i < 2; ++i) {
        for (int j = 0; j < 2; ++j) {
          t.emplace_back(static_cast<int>(dofs[i]), static_cast<int>(dofs[j]), m[i][j]);
        }
      }
    }
  }
  return detail::from_triplets(space.dim(), t);
}

/// <f, phi_i> with weight w (8-point Gauss per element).
inline Vector load_vector(const FemSpace& space, const GraphFunction& f,
                          const GraphFunction& weight) {
  Vector b = Vector::Zero(static_cast<Eigen::Index>(space.dim()));
  const auto& q8 = gauss8();
  for (std::size_t k = 0; k < space.num_edges(); ++k) {
    const double h = space.h(k);
    for (std::size_t el = 0; el < space.elements(k); ++el) {
      const double z0 = space.node_z(k, el);
      const double z1 = space.node_z(k, el + 1);
      for (std::size_t q = 0; q < q8.x.size(); ++q) {
        const double z = 0.5 * (z0 + z1) + 0.5 * h * q8.x[q];
        const double w = 0.5 * h * q8.w[q] * weight(k, z) * f(k, z);
        b[static_cast<Eigen::Index>(space.node_dof(k, el))] += w * (z1 - z) / h;
        b[static_cast<Eigen::Index>(space.node_dof(k, el + 1))] += w * (z - z0) / h;
      }
    }
  }
  return b;
}

/// Nodal interpolant; f must agree across the edges meeting at each vertex.
inline Vector interpolate(const FemSpace& space, const GraphFunction& f, double tol = 1e-8) {
  Vector u = Vector::Zero(static_cast<Eigen::Index>(space.dim()));
  std::vector<bool> set(space.dim(), false);
  for (std::size_t k = 0; k < space.num_edges(); ++k) {
    for (std::size_t j = 0; j <= space.elements(k); ++j) {
      const std::size_t d = space.node_dof(k, j);
      const double v = f(k, space.node_z(k, j));
      const auto di = static_cast<Eigen::Index>(d);
      if (set[d]) {
        if (std::abs(u[di] - v) > tol * (1.0 + std::abs(v))) {
          throw Error(ErrorCode::PreconditionViolated,
                      "function is discontinuous at a vertex (" + std::to_string(u[di]) + " vs " +
                          std::to_string(v) + ")");
        }
        continue;
      }
      u[di] = v;
      set[d] = true;
    }
  }
  return u;
}

/// Value of a finite element function at (edge, z).
inline double evaluate(const FemSpace& space, const Vector& u, std::size_t k, double z) {
  const Edge& e = space.graph().edges()[k];
  const double h = space.h(k);
  double t = (z - e.a) / h;
  auto el = static_cast<std::size_t>(std::clamp(std::floor(t), 0.0,
                                                static_cast<double>(space.elements(k) - 1)));
  const double z0 = space.node_z(k, el);
  const double s = (z - z0) / h;
  return (1.0 - s) * u[static_cast<Eigen::Index>(space.node_dof(k, el))] +
         s * u[static_cast<Eigen::Index>(space.node_dof(k, el + 1))];
}

// ---------------------------------------------------------------------------
// Solves
// ---------------------------------------------------------------------------

namespace detail {

using LU = Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>>;

inline std::shared_ptr<LU> factorize(const SparseMatrix& m) {
  auto lu = std::make_shared<LU>();
  lu->compute(m);
  if (lu->info() != Eigen::Success) {
    throw Error(ErrorCode::SingularSystem, "sparse LU failed: " + lu->lastErrorMessage());
  }
  return lu;
}

/// Solve with one step of iterative refinement when the residual is large.
inline Vector solve_refined(const LU& lu, const SparseMatrix& m, const Vector& rhs) {
  Vector x = lu.solve(rhs);
  const double scale = std::max(rhs.norm(), 1e-300);
  for (int it = 0; it < 3; ++it) {
    const Vector r = rhs - m * x;
    if (r.norm() <= 1e-13 * scale) break;
    x += lu.solve(r);
  }
  if (!x.allFinite()) throw Error(ErrorCode::SingularSystem, "solution is not finite");
  return x;
}

}  // namespace detail

/// (y M_delta - A) x = rhs with factorizations cached per shift y. Concurrent
/// solves are safe.
class ShiftedSolver {
 public:
  ShiftedSolver(SparseMatrix M_delta, SparseMatrix A) : M_(std::move(M_delta)), A_(std::move(A)) {}
  explicit ShiftedSolver(const AssembledOperators& ops) : ShiftedSolver(ops.M_delta, ops.A) {}

  Vector solve(double y, const Vector& rhs) const {
    const auto entry = get(y);
    return detail::solve_refined(*entry.lu, entry.matrix, rhs);
  }

  double residual(double y, const Vector& x, const Vector& rhs) const {
    const auto entry = get(y);
    return (entry.matrix * x - rhs).norm() / std::max(rhs.norm(), 1e-300);
  }

 private:
  struct Entry {
    SparseMatrix matrix;
    std::shared_ptr<detail::LU> lu;
  };

  Entry get(double y) const {
    std::lock_guard<std::mutex> lock(*mutex_);
    auto it = cache_.find(y);
    if (it != cache_.end()) return it->second;
    SparseMatrix m = y * M_ - A_;
    m.makeCompressed();
    Entry e{m, detail::factorize(m)};
    cache_.emplace(y, e);
    return e;
  }

  SparseMatrix M_, A_;
  mutable std::map<double, Entry> cache_;
  std::shared_ptr<std::mutex> mutex_ = std::make_shared<std::mutex>();
};

inline Vector solve_shifted(const AssembledOperators& ops, double y, const Vector& rhs) {
  return ShiftedSolver(ops).solve(y, rhs);
}

/// P_h f: solves M_delta x = rhs, rhs_i = <f, phi_i>_{beta^delta gamma}.
inline Vector l2_project(const AssembledOperators& ops, const Vector& rhs) {
  auto lu = detail::factorize(ops.M_delta);
  return detail::solve_refined(*lu, ops.M_delta, rhs);
}

inline Vector l2_project(const FemSpace& space, const AssembledOperators& ops,
                         const FormCoefficients& c, const GraphFunction& f) {
  const auto& g = c.gamma;
  const auto& bd = c.beta_delta;
  return l2_project(ops, load_vector(space, f, [&](std::size_t k, double z) {
                      return bd(k, z) * g(k, z);
                    }));
}

/// a_0(f, phi_i) = 1/2 int alpha f' (phi_i' gamma + phi_i gamma').
inline Vector form_load(const FemSpace& space, const FormCoefficients& c,
                        const GraphFunction& df) {
  Vector b = Vector::Zero(static_cast<Eigen::Index>(space.dim()));
  const auto& q8 = gauss8();
  for (std::size_t k = 0; k < space.num_edges(); ++k) {
    const double h = space.h(k);
    for (std::size_t el = 0; el < space.elements(k); ++el) {
      const double z0 = space.node_z(k, el);
      const double z1 = space.node_z(k, el + 1);
      for (std::size_t q = 0; q < q8.x.size(); ++q) {
        const double z = 0.5 * (z0 + z1) + 0.5 * h * q8.x[q];
        const double w = 0.5 * h * q8.w[q] * 0.5 * c.alpha(k, z) * df(k, z);
        const double g = c.gamma(k, z), dg = c.gamma.derivative(k, z);
        b[static_cast<Eigen::Index>(space.node_dof(k, el))] += w * (-g / h + (z1 - z) / h * dg);
        b[static_cast<Eigen::Index>(space.node_dof(k, el + 1))] += w * (g / h + (z - z0) / h * dg);
      }
    }
  }
  return b;
}

/// Ritz projection for the shifted form a_lambda = lambda (.,.) + a_0. The
/// shift must exceed 1.5 * kappa1 / 8 (kappa1 being an empirical estimate)
/// and be positive.
inline Vector ritz_project(const FemSpace& space, const AssembledOperators& ops,
                           const FormCoefficients& c, const GraphFunction& f,
                           const GraphFunction& df, double lambda, double kappa1 = 0.0) {
  const double threshold = 1.5 * kappa1 / 8.0;
  if (!(lambda > threshold) || !(lambda > 0.0)) {
    throw Error(ErrorCode::NonCoerciveShift, "shift " + std::to_string(lambda) +
                                                 " must exceed " + std::to_string(threshold) +
                                                 " and 0");
  }
  const auto& g = c.gamma;
  const auto& bd = c.beta_delta;
  const Vector mass = load_vector(space, f, [&](std::size_t k, double z) {
    return bd(k, z) * g(k, z);
  });
  const Vector rhs = lambda * mass + form_load(space, c, df);
  return solve_shifted(ops, lambda, rhs);
}

// ---------------------------------------------------------------------------
// Output
// ---------------------------------------------------------------------------

/// Matrix Market coordinate format, 1-based triplets.
inline void write_matrix_market(std::ostream& os, const SparseMatrix& m) {
  os << "%%MatrixMarket matrix coordinate real general\n";
  os << m.rows() << ' ' << m.cols() << ' ' << m.nonZeros() << '\n';
  os << std::setprecision(17);
  for (int col = 0; col < m.outerSize(); ++col) {
    for (SparseMatrix::InnerIterator it(m, col); it; ++it) {
      os << it.row() + 1 << ' ' << it.col() + 1 << ' ' << it.value() << '\n';
    }
  }
}

inline double max_abs(const SparseMatrix& m) {
  double v = 0.0;
  for (int col = 0; col < m.outerSize(); ++col) {
    for (SparseMatrix::InnerIterator it(m, col); it; ++it) v = std::max(v, std::abs(it.value()));
  }
  return v;
}

}  // namespace gspde
