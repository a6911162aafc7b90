#pragma once

// Reduction of a planar Hamiltonian H to its graph: critical points, the
// join tree of sublevel sets (Reeb graph), level-curve tracing and the
// contour integrals alpha = int |grad H| dl, beta = int |grad H|^-1 dl.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "gspde/coefficients.hpp"
#include "gspde/error.hpp"
#include "gspde/expression.hpp"
#include "gspde/graph.hpp"
#include "gspde/jet.hpp"
#include "gspde/tabulation.hpp"

namespace gspde {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

struct HamiltonianPoint {
  double value = 0.0;
  Vec2 gradient = Vec2::Zero();
  Mat2 hessian = Mat2::Zero();
  double laplacian() const { return hessian.trace(); }
};

class HamiltonianSpec {
 public:
  using JetFn = std::function<Jet2(const Jet2&, const Jet2&)>;
  using ValueFn = std::function<double(double, double)>;

  HamiltonianSpec() = default;

  /// Exact derivatives through jets.
  static HamiltonianSpec from_jet(std::string name, JetFn f, double lo = -3.0, double hi = 3.0) {
    HamiltonianSpec s;
    s.name_ = std::move(name);
    s.jet_ = std::move(f);
    s.lo_ = lo;
    s.hi_ = hi;
    return s;
  }

  /// Value only; gradient and Hessian by central differences (step 1e-4 * scale).
  static HamiltonianSpec from_values(std::string name, ValueFn f, double lo = -3.0,
                                     double hi = 3.0) {
    HamiltonianSpec s;
    s.name_ = std::move(name);
    s.value_ = std::move(f);
    s.lo_ = lo;
    s.hi_ = hi;
    return s;
  }

  static HamiltonianSpec from_expression(const std::string& text, double lo = -3.0,
                                         double hi = 3.0) {
    Expression e = Expression::parse(text);
    return from_jet(text, [e](const Jet2& x1, const Jet2& x2) { return e(x1, x2); }, lo, hi);
  }

  const std::string& name() const { return name_; }
  double box_lo() const { return lo_; }
  double box_hi() const { return hi_; }
  double scale() const { return scale_; }
  int seed_grid() const { return seed_grid_; }
  double shift() const { return shift_; }
  bool has_exact_derivatives() const { return static_cast<bool>(jet_); }

  HamiltonianSpec& set_seed_grid(int n) {
    seed_grid_ = n;
    return *this;
  }

  /// H - c.
  HamiltonianSpec shifted(double c) const {
    HamiltonianSpec s = *this;
    s.shift_ += c;
    return s;
  }

  double value(const Vec2& x) const {
    if (jet_) return jet_(Jet2(x[0]), Jet2(x[1])).v - shift_;
    return value_(x[0], x[1]) - shift_;
  }

  HamiltonianPoint eval(const Vec2& x) const {
    HamiltonianPoint p;
    if (jet_) {
      const Jet2 j = jet_(Jet2::variable(x[0], 0), Jet2::variable(x[1], 1));
      p.value = j.v - shift_;
      p.gradient = Vec2(j.g[0], j.g[1]);
      p.hessian << j.h[0], j.h[1], j.h[1], j.h[2];
      return p;
    }
    const double h = 1e-4 * scale_;
    auto f = [&](double dx, double dy) { return value_(x[0] + dx, x[1] + dy); };
    const double f0 = f(0, 0);
    p.value = f0 - shift_;
    p.gradient = Vec2((f(h, 0) - f(-h, 0)) / (2 * h), (f(0, h) - f(0, -h)) / (2 * h));
    const double fxx = (f(h, 0) - 2 * f0 + f(-h, 0)) / (h * h);
    const double fyy = (f(0, h) - 2 * f0 + f(0, -h)) / (h * h);
    const double fxy = (f(h, h) - f(h, -h) - f(-h, h) + f(-h, -h)) / (4 * h * h);
    p.hessian << fxx, fxy, fxy, fyy;
    return p;
  }

  Vec2 gradient(const Vec2& x) const { return eval(x).gradient; }

 private:
  std::string name_;
  JetFn jet_;
  ValueFn value_;
  double lo_ = -3.0, hi_ = 3.0;
  double scale_ = 1.0;
  double shift_ = 0.0;
  int seed_grid_ = 41;
};

// ---------------------------------------------------------------------------
// Critical points
// ---------------------------------------------------------------------------

enum class CriticalKind { Minimum, Maximum, Saddle };

inline const char* to_string(CriticalKind k) {
  switch (k) {
    case CriticalKind::Minimum: return "minimum";
    case CriticalKind::Maximum: return "maximum";
    case CriticalKind::Saddle: return "saddle";
  }
  return "?";
}

struct CriticalPoint {
  Vec2 x = Vec2::Zero();
  double value = 0.0;
  CriticalKind kind = CriticalKind::Minimum;
  Mat2 hessian = Mat2::Zero();
};

namespace detail {

inline std::optional<Vec2> newton_critical(const HamiltonianSpec& spec, Vec2 x) {
  const double width = spec.box_hi() - spec.box_lo();
  for (int it = 0; it < 60; ++it) {
    const auto p = spec.eval(x);
    if (p.gradient.norm() <= 1e-13 * spec.scale()) return x;
    const double det = p.hessian.determinant();
    if (!std::isfinite(det) || std::abs(det) < 1e-300) return std::nullopt;
    Vec2 step = p.hessian.fullPivLu().solve(p.gradient);
    if (step.norm() > 0.25 * width) step *= 0.25 * width / step.norm();
    x -= step;
    if (!x.allFinite()) return std::nullopt;
    if (x.minCoeff() < spec.box_lo() - 0.1 * width || x.maxCoeff() > spec.box_hi() + 0.1 * width) {
      return std::nullopt;
    }
  }
  const auto p = spec.eval(x);
  if (p.gradient.norm() <= 1e-10 * spec.scale()) return x;
  return std::nullopt;
}

}  // namespace detail

/// Newton from a grid of seeds over the search box; roots deduplicated,
/// classified by the Hessian and sorted by value.
inline std::vector<CriticalPoint> find_critical_points(const HamiltonianSpec& spec) {
  const int n = spec.seed_grid();
  const double lo = spec.box_lo();
  const double hi = spec.box_hi();
  const double width = hi - lo;
  std::vector<Vec2> roots;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const Vec2 seed(lo + width * (i + 0.5) / n, lo + width * (j + 0.5) / n);
      auto r = detail::newton_critical(spec, seed);
      if (!r) continue;
      if (r->minCoeff() < lo || r->maxCoeff() > hi) continue;
      bool dup = false;
      for (const auto& q : roots) {
        if ((q - *r).norm() < 1e-6 * width) {
          dup = true;
          break;
        }
      }
      if (!dup) roots.push_back(*r);
    }
  }
  std::vector<CriticalPoint> cps;
  for (const auto& x : roots) {
    const auto p = spec.eval(x);
    CriticalPoint cp;
    cp.x = x;
    cp.value = p.value;
    cp.hessian = p.hessian;
    const double det = p.hessian.determinant();
    const double norm = p.hessian.norm();
    if (std::abs(det) <= 1e-6 * std::max(1.0, norm * norm)) {
      throw Error(ErrorCode::DegenerateHessian, "degenerate critical point at (" +
                                                    std::to_string(x[0]) + ", " +
                                                    std::to_string(x[1]) + ")");
    }
    if (det < 0) {
      cp.kind = CriticalKind::Saddle;
    } else {
      cp.kind = p.hessian.trace() > 0 ? CriticalKind::Minimum : CriticalKind::Maximum;
    }
    cps.push_back(cp);
  }
  std::sort(cps.begin(), cps.end(),
            [](const CriticalPoint& a, const CriticalPoint& b) { return a.value < b.value; });
  for (std::size_t i = 1; i < cps.size(); ++i) {
    if (cps[i].value - cps[i - 1].value <= 1e-9 * std::max(1.0, std::abs(cps[i].value))) {
      throw Error(ErrorCode::DuplicateCriticalValue,
                  "critical values " + std::to_string(cps[i - 1].value) + " repeat");
    }
  }
  return cps;
}

/// Shifts H so that its minimum over the critical points is 0.
inline HamiltonianSpec normalize(const HamiltonianSpec& spec) {
  const auto cps = find_critical_points(spec);
  double m = std::numeric_limits<double>::infinity();
  for (const auto& c : cps) {
    if (c.kind == CriticalKind::Minimum) m = std::min(m, c.value);
  }
  if (!std::isfinite(m)) throw Error(ErrorCode::InvalidHamiltonian, "no minimum in search box");
  return spec.shifted(m);
}

/// Compares the supplied gradient against central differences at random
/// points of the box and checks min H = 0 at the critical points.
inline void validate_hamiltonian(const HamiltonianSpec& spec, int samples = 64,
                                 std::uint64_t seed = 1) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(spec.box_lo(), spec.box_hi());
  const double h = 1e-5 * spec.scale();
  for (int i = 0; i < samples; ++i) {
    const Vec2 x(u(rng), u(rng));
    const Vec2 g = spec.gradient(x);
    const Vec2 fd((spec.value(x + Vec2(h, 0)) - spec.value(x - Vec2(h, 0))) / (2 * h),
                  (spec.value(x + Vec2(0, h)) - spec.value(x - Vec2(0, h))) / (2 * h));
    if ((g - fd).norm() > 1e-5 * std::max(1.0, g.norm())) {
      throw Error(ErrorCode::InvalidHamiltonian, "gradient disagrees with finite differences");
    }
  }
  const auto cps = find_critical_points(spec);
  double m = std::numeric_limits<double>::infinity();
  for (const auto& c : cps) {
    if (c.kind == CriticalKind::Minimum) m = std::min(m, c.value);
  }
  if (!(std::abs(m) <= 1e-8 * spec.scale())) {
    throw Error(ErrorCode::InvalidHamiltonian, "min H is not 0 in the search box");
  }
}

// ---------------------------------------------------------------------------
// Registry
// ---------------------------------------------------------------------------

/// harmonic:    |x|^2 / 2
/// double-well: (x1^2 - 1)^2 + x2^2 + 0.2 x1          (tilted: distinct minima values)
/// triple-well: P(x1) + x2^2, P' = x(x^2-1)(x^2-4) + 0.3
/// Each is shifted so that min H = 0.
inline HamiltonianSpec make_hamiltonian(const std::string& name) {
  if (name == "harmonic") {
    return HamiltonianSpec::from_jet(
        name, [](const Jet2& x, const Jet2& y) { return 0.5 * (x * x + y * y); });
  }
  if (name == "double-well") {
    auto s = HamiltonianSpec::from_jet(name, [](const Jet2& x, const Jet2& y) {
      const Jet2 q = x * x - 1.0;
      return q * q + y * y + 0.2 * x;
    });
    return normalize(s);
  }
  if (name == "triple-well") {
    auto s = HamiltonianSpec::from_jet(name, [](const Jet2& x, const Jet2& y) {
      const Jet2 x2 = x * x;
      const Jet2 x4 = x2 * x2;
      return x4 * x2 / 6.0 - 1.25 * x4 + 2.0 * x2 + 0.3 * x + y * y;
    });
    return normalize(s);
  }
  throw Error(ErrorCode::InvalidConfig, "unknown Hamiltonian '" + name + "'");
}

inline std::vector<std::string> hamiltonian_names() {
  return {"harmonic", "double-well", "triple-well"};
}

// ---------------------------------------------------------------------------
// Reeb graph
// ---------------------------------------------------------------------------

struct ReebEdgeInfo {
  std::vector<std::size_t> minima;  // indices into critical_points enclosed by the component
  std::size_t seed_minimum = 0;
  int lower_cp = -1;
  int upper_cp = -1;  // -1 for the infinity vertex
};

struct ReebGraph {
  MetricGraph graph;
  std::vector<CriticalPoint> critical_points;
  std::vector<ReebEdgeInfo> edges;  // parallel to graph.edges()
  /// Vertex id of critical point i is i + 1; the infinity vertex is n + 1.
  int vertex_id(std::size_t cp) const { return static_cast<int>(cp) + 1; }
};

namespace detail {

/// Steepest descent with backtracking, then Newton polish; returns the index
/// of the minimum reached.
inline std::optional<std::size_t> descend_to_minimum(const HamiltonianSpec& spec, Vec2 x,
                                                     const std::vector<CriticalPoint>& cps) {
  double step = 1e-2 * spec.scale();
  for (int it = 0; it < 20000; ++it) {
    const auto p = spec.eval(x);
    const double gn = p.gradient.norm();
    for (std::size_t i = 0; i < cps.size(); ++i) {
      if (cps[i].kind == CriticalKind::Minimum && (x - cps[i].x).norm() < 1e-3 * spec.scale()) {
        return i;
      }
    }
    if (gn < 1e-14) break;
    // Newton once the Hessian is positive definite and the step is short
    if (p.hessian.determinant() > 0 && p.hessian.trace() > 0) {
      const Vec2 nstep = p.hessian.ldlt().solve(p.gradient);
      if (nstep.norm() < 0.05 * spec.scale() && spec.value(x - nstep) < p.value) {
        x -= nstep;
        continue;
      }
    }
    const Vec2 dir = -p.gradient / gn;
    double s = step;
    while (s > 1e-14 && spec.value(x + s * dir) >= p.value) s *= 0.5;
    if (s <= 1e-14) break;
    x += s * dir;
    step = std::min(2.0 * s, 0.1 * spec.scale());
  }
  return std::nullopt;
}

struct UnionFind {
  std::vector<std::size_t> parent;
  explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  std::size_t find(std::size_t i) {
    while (parent[i] != i) i = parent[i] = parent[parent[i]];
    return i;
  }
};

}  // namespace detail

/// Sweeps critical values upward. Each minimum opens a component; at a saddle
/// the two descending separatrices identify the components that merge. The
/// last open component is joined to the infinity vertex. Edges are ordered
/// by (lower value, upper value).
inline ReebGraph build_reeb_graph(const HamiltonianSpec& spec,
                                  const std::vector<CriticalPoint>& cps) {
  const std::size_t n = cps.size();
  detail::UnionFind uf(n);
  std::vector<int> top(n, -1);  // component root -> critical point where its open edge starts
  std::vector<std::vector<std::size_t>> members(n);
  struct Pending {
    int lower, upper;
    std::vector<std::size_t> minima;
  };
  std::vector<Pending> pending;

  for (std::size_t i = 0; i < n; ++i) {
    const auto& c = cps[i];
    if (c.kind == CriticalKind::Maximum) {
      throw Error(ErrorCode::InvalidHamiltonian, "local maximum at value " +
                                                     std::to_string(c.value) +
                                                     " is not supported");
    }
    if (c.kind == CriticalKind::Minimum) {
      top[i] = static_cast<int>(i);
      members[i] = {i};
      continue;
    }
    Eigen::SelfAdjointEigenSolver<Mat2> es(c.hessian);
    const Vec2 v = es.eigenvectors().col(0);  // negative eigenvalue first
    const double eps = 1e-3 * spec.scale();
    auto ma = detail::descend_to_minimum(spec, c.x + eps * v, cps);
    auto mb = detail::descend_to_minimum(spec, c.x - eps * v, cps);
    if (!ma || !mb) {
      throw Error(ErrorCode::ComponentTrackingAmbiguity,
                  "descent from saddle at value " + std::to_string(c.value) + " did not settle");
    }
    const std::size_t ra = uf.find(*ma);
    const std::size_t rb = uf.find(*mb);
    if (ra == rb) {
      throw Error(ErrorCode::ComponentTrackingAmbiguity,
                  "both sides of the saddle at value " + std::to_string(c.value) +
                      " reach the same component");
    }
    if (cps[*ma].value >= c.value || cps[*mb].value >= c.value) {
      throw Error(ErrorCode::ComponentTrackingAmbiguity, "separatrix reached a higher minimum");
    }
    pending.push_back({top[ra], static_cast<int>(i), members[ra]});
    pending.push_back({top[rb], static_cast<int>(i), members[rb]});
    uf.parent[rb] = ra;
    members[ra].insert(members[ra].end(), members[rb].begin(), members[rb].end());
    std::sort(members[ra].begin(), members[ra].end());
    top[ra] = static_cast<int>(i);
  }

  std::vector<std::size_t> roots;
  for (std::size_t i = 0; i < n; ++i) {
    if (cps[i].kind == CriticalKind::Minimum && uf.find(i) == i) roots.push_back(i);
  }
  if (roots.size() != 1) {
    throw Error(ErrorCode::ComponentTrackingAmbiguity,
                std::to_string(roots.size()) + " components remain above the last saddle");
  }
  pending.push_back({top[roots[0]], -1, members[roots[0]]});

  auto level = [&](int cp) { return cp < 0 ? kInfinity : cps[cp].value; };
  std::stable_sort(pending.begin(), pending.end(), [&](const Pending& a, const Pending& b) {
    if (level(a.lower) != level(b.lower)) return level(a.lower) < level(b.lower);
    return level(a.upper) < level(b.upper);
  });

  GraphDescription d;
  for (std::size_t i = 0; i < n; ++i) {
    d.vertices.push_back({static_cast<int>(i) + 1,
                          cps[i].kind == CriticalKind::Saddle ? VertexKind::Interior
                                                              : VertexKind::Exterior,
                          cps[i].value});
  }
  const int inf_id = static_cast<int>(n) + 1;
  d.vertices.push_back({inf_id, VertexKind::Infinity, kInfinity});
  ReebGraph out;
  int eid = 1;
  for (const auto& p : pending) {
    const int vb = p.upper < 0 ? inf_id : p.upper + 1;
    d.edges.push_back({eid++, level(p.lower), level(p.upper), p.lower + 1, vb});
    ReebEdgeInfo info;
    info.minima = p.minima;
    info.lower_cp = p.lower;
    info.upper_cp = p.upper;
    // seed from the member minimum lying lowest
    info.seed_minimum = *std::min_element(
        p.minima.begin(), p.minima.end(),
        [&](std::size_t a, std::size_t b) { return cps[a].value < cps[b].value; });
    out.edges.push_back(info);
  }
  out.graph = build_graph(d);
  out.critical_points = cps;
  return out;
}

inline ReebGraph build_reeb_graph(const HamiltonianSpec& spec) {
  return build_reeb_graph(spec, find_critical_points(spec));
}

// ---------------------------------------------------------------------------
// Level curves
// ---------------------------------------------------------------------------

struct TraceOptions {
  double turn_angle = 2.0 * M_PI / 400.0;  // max tangent turn per step
  double max_step = 0.05;                  // times scale
  std::size_t max_steps = 4'000'000;
  double level_tol = 1e-13;
};

struct LevelComponent {
  double z = 0.0;
  std::size_t edge = 0;
  std::vector<Vec2> points;  // closed: segment i joins points[i] and points[i+1 mod N]
  std::vector<Vec2> mids;    // level-set point near the middle of each segment
};

namespace detail {

inline bool project_to_level(const HamiltonianSpec& spec, Vec2& x, double z, double tol) {
  for (int it = 0; it < 40; ++it) {
    const auto p = spec.eval(x);
    const double r = p.value - z;
    if (std::abs(r) <= tol * std::max(1.0, std::abs(z))) return true;
    const double g2 = p.gradient.squaredNorm();
    if (!(g2 > 0.0)) return false;
    x -= r / g2 * p.gradient;
  }
  return std::abs(spec.value(x) - z) <= 1e3 * tol * std::max(1.0, std::abs(z));
}

/// Winding number of a closed polyline around q.
inline int winding_number(const std::vector<Vec2>& poly, const Vec2& q) {
  double total = 0.0;
  const std::size_t n = poly.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 a = poly[i] - q;
    const Vec2 b = poly[(i + 1) % n] - q;
    total += std::atan2(a[0] * b[1] - a[1] * b[0], a.dot(b));
  }
  return static_cast<int>(std::lround(total / (2.0 * M_PI)));
}

/// First point with H >= z along rays from x0; the ray with the largest
/// gradient at its crossing wins.
inline Vec2 ray_seed(const HamiltonianSpec& spec, const Vec2& x0, double z) {
  Vec2 best = x0;
  double best_grad = -1.0;
  const double reach = 100.0 * (spec.box_hi() - spec.box_lo());
  for (int d = 0; d < 16; ++d) {
    const double th = 2.0 * M_PI * (d + 0.25) / 16.0;
    const Vec2 dir(std::cos(th), std::sin(th));
    double t0 = 0.0;
    double t1 = -1.0;
    double t = 0.0;
    while (t < reach) {
      const auto p = spec.eval(x0 + t * dir);
      if (p.value >= z) {
        t1 = t;
        break;
      }
      t0 = t;
      const double slope = std::max(std::abs(p.gradient.dot(dir)), 1e-12);
      t += std::clamp(0.5 * (z - p.value) / slope, 1e-7 * spec.scale(), 0.02 * spec.scale());
    }
    if (t1 < 0) continue;
    for (int it = 0; it < 200 && t1 - t0 > 1e-15 * std::max(1.0, t1); ++it) {
      const double tm = 0.5 * (t0 + t1);
      if (spec.value(x0 + tm * dir) >= z) {
        t1 = tm;
      } else {
        t0 = tm;
      }
    }
    Vec2 x = x0 + t1 * dir;
    const double g = spec.gradient(x).norm();
    if (g > best_grad) {
      best_grad = g;
      best = x;
    }
  }
  if (best_grad < 0) throw Error(ErrorCode::TraceDiverged, "no ray reaches the level");
  return best;
}

}  // namespace detail

/// Predictor-corrector trace of the component of {H = z} belonging to `edge`.
inline LevelComponent trace_level(const HamiltonianSpec& spec, const ReebGraph& reeb,
                                  std::size_t edge, double z, const TraceOptions& opt = {}) {
  const Edge& e = reeb.graph.edges().at(edge);
  if (!(z > e.a && z < e.b)) {
    throw Error(ErrorCode::PreconditionViolated,
                "level " + std::to_string(z) + " is not inside edge " + std::to_string(e.id));
  }
  const auto& info = reeb.edges[edge];
  const Vec2 x_min = reeb.critical_points[info.seed_minimum].x;
  Vec2 p0 = detail::ray_seed(spec, x_min, z);
  if (!detail::project_to_level(spec, p0, z, opt.level_tol)) {
    throw Error(ErrorCode::TraceDiverged, "seed does not converge to the level");
  }

  LevelComponent c;
  c.z = z;
  c.edge = edge;
  c.points.push_back(p0);
  const double s_max = opt.max_step * spec.scale();
  Vec2 p = p0;
  double traveled = 0.0;
  for (std::size_t step = 0;; ++step) {
    if (step >= opt.max_steps) throw Error(ErrorCode::TraceDiverged, "level curve did not close");
    const auto hp = spec.eval(p);
    const double gn = hp.gradient.norm();
    if (!(gn > 0.0)) throw Error(ErrorCode::TraceDiverged, "zero gradient on the level curve");
    const Vec2 t(-hp.gradient[1] / gn, hp.gradient[0] / gn);
    const double curvature = std::abs(t.dot(hp.hessian * t)) / gn;
    double s = curvature > 0 ? std::min(s_max, opt.turn_angle / curvature) : s_max;

    const Vec2 to_start = p0 - p;
    if (traveled > 3.0 * s && to_start.norm() <= 1.5 * s && to_start.dot(t) > 0) {
      Vec2 m = 0.5 * (p + p0);
      if (!detail::project_to_level(spec, m, z, opt.level_tol)) {
        throw Error(ErrorCode::TraceDiverged, "corrector failed at closure");
      }
      c.mids.push_back(m);
      break;
    }
    Vec2 q;
    bool ok = false;
    for (int tries = 0; tries < 30 && !ok; ++tries, s *= 0.5) {
      q = p + s * t;
      ok = detail::project_to_level(spec, q, z, opt.level_tol) && (q - p).norm() < 2.0 * s;
    }
    if (!ok) throw Error(ErrorCode::TraceDiverged, "corrector failed");
    Vec2 m = 0.5 * (p + q);
    if (!detail::project_to_level(spec, m, z, opt.level_tol)) {
      throw Error(ErrorCode::TraceDiverged, "corrector failed at midpoint");
    }
    c.mids.push_back(m);
    traveled += (q - p).norm();
    c.points.push_back(q);
    p = q;
  }

  // the curve must enclose exactly the minima of its component
  for (std::size_t i = 0; i < reeb.critical_points.size(); ++i) {
    if (reeb.critical_points[i].kind != CriticalKind::Minimum) continue;
    const bool inside = detail::winding_number(c.points, reeb.critical_points[i].x) != 0;
    const bool member = std::find(info.minima.begin(), info.minima.end(), i) != info.minima.end();
    if (inside != member) {
      throw Error(ErrorCode::WrongComponent, "traced curve at z = " + std::to_string(z) +
                                                 " does not match edge " + std::to_string(e.id));
    }
  }
  return c;
}

struct ContourIntegrals {
  double alpha = 0.0;          // int |grad H| dl
  double beta = 0.0;           // int |grad H|^-1 dl
  double length = 0.0;
  double laplacian = 0.0;      // int Delta H / |grad H| dl  (= d alpha / dz)
  double alpha_coarse = 0.0;   // same rule on every other point
  double beta_coarse = 0.0;
  double oscillation = 0.0;    // max relative change coarse vs fine
  double min_gradient = 0.0;
};

namespace detail {

inline double richardson_length(const Vec2& a, const Vec2& m, const Vec2& b) {
  return (4.0 * ((a - m).norm() + (m - b).norm()) - (a - b).norm()) / 3.0;
}

}  // namespace detail

/// Simpson's rule per segment (ends and projected midpoint) with the
/// Richardson-corrected arc length.
inline ContourIntegrals contour_integrals(const HamiltonianSpec& spec, const LevelComponent& c,
                                          double gradient_tol = 1e-8) {
  const std::size_t n = c.points.size();
  std::vector<HamiltonianPoint> at(n), mid(n);
  for (std::size_t i = 0; i < n; ++i) {
    at[i] = spec.eval(c.points[i]);
    mid[i] = spec.eval(c.mids[i]);
  }
  ContourIntegrals r;
  r.min_gradient = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    r.min_gradient = std::min({r.min_gradient, at[i].gradient.norm(), mid[i].gradient.norm()});
  }
  if (r.min_gradient < gradient_tol * spec.scale()) {
    throw Error(ErrorCode::NearZeroGradient,
                "|grad H| = " + std::to_string(r.min_gradient) + " on the level curve");
  }
  auto simpson = [](double L, double fa, double fm, double fb) {
    return L * (fa + 4.0 * fm + fb) / 6.0;
  };
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = (i + 1) % n;
    const double L = detail::richardson_length(c.points[i], c.mids[i], c.points[j]);
    const double ga = at[i].gradient.norm(), gm = mid[i].gradient.norm(),
                 gb = at[j].gradient.norm();
    r.length += L;
    r.alpha += simpson(L, ga, gm, gb);
    r.beta += simpson(L, 1.0 / ga, 1.0 / gm, 1.0 / gb);
    r.laplacian += simpson(L, at[i].laplacian() / ga, mid[i].laplacian() / gm,
                           at[j].laplacian() / gb);
  }
  // coarse: pairs of segments, the shared point playing the midpoint
  if (n >= 4) {
    const std::size_t pairs = n / 2;
    for (std::size_t k = 0; k < pairs; ++k) {
      const std::size_t i = 2 * k, m = 2 * k + 1;
      const std::size_t j = (k + 1 == pairs) ? 0 : 2 * k + 2;
      // an odd count leaves one trailing segment, folded into the last pair
      double L = detail::richardson_length(c.points[i], c.points[m], c.points[j]);
      const double ga = at[i].gradient.norm(), gm = at[m].gradient.norm(),
                   gb = at[j].gradient.norm();
      if (k + 1 == pairs && n % 2 == 1) {
        const std::size_t last = n - 1;
        L = detail::richardson_length(c.points[i], c.points[m], c.points[last]);
        r.alpha_coarse += simpson(L, ga, gm, at[last].gradient.norm());
        r.beta_coarse += simpson(L, 1.0 / ga, 1.0 / gm, 1.0 / at[last].gradient.norm());
        const double Ll = detail::richardson_length(c.points[last], c.mids[last], c.points[0]);
        r.alpha_coarse += simpson(Ll, at[last].gradient.norm(), mid[last].gradient.norm(),
                                  at[0].gradient.norm());
        r.beta_coarse += simpson(Ll, 1.0 / at[last].gradient.norm(),
                                 1.0 / mid[last].gradient.norm(), 1.0 / at[0].gradient.norm());
        continue;
      }
      r.alpha_coarse += simpson(L, ga, gm, gb);
      r.beta_coarse += simpson(L, 1.0 / ga, 1.0 / gm, 1.0 / gb);
    }
    r.oscillation = std::max(std::abs(r.alpha_coarse - r.alpha) / r.alpha,
                             std::abs(r.beta_coarse - r.beta) / r.beta);
  }
  return r;
}

/// int phi |grad H|^-1 dl over the curve, same rule as contour_integrals.
inline double contour_average_numerator(const HamiltonianSpec& spec, const LevelComponent& c,
                                        const std::function<double(const Vec2&)>& phi) {
  const std::size_t n = c.points.size();
  double total = 0.0;
  std::vector<double> fa(n);
  for (std::size_t i = 0; i < n; ++i) fa[i] = phi(c.points[i]) / spec.gradient(c.points[i]).norm();
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = (i + 1) % n;
    const double L = detail::richardson_length(c.points[i], c.mids[i], c.points[j]);
    const double fm = phi(c.mids[i]) / spec.gradient(c.mids[i]).norm();
    total += L * (fa[i] + 4.0 * fm + fa[j]) / 6.0;
  }
  return total;
}

/// alpha and beta on `edge` at level z.
inline ContourIntegrals reduce_at(const HamiltonianSpec& spec, const ReebGraph& reeb,
                                  std::size_t edge, double z, const TraceOptions& opt = {}) {
  return contour_integrals(spec, trace_level(spec, reeb, edge, z, opt));
}

// ---------------------------------------------------------------------------
// Tabulation and projection
// ---------------------------------------------------------------------------

struct TabulationOptions {
  std::size_t samples = 24;   // per edge, at least 16
  double guard = 1e-4;        // distance kept from critical values (times scale)
  double tail_span = 10.0;    // sampled part of the unbounded edge beyond H0
  TraceOptions trace;
};

/// Sample levels of an edge: Chebyshev points inside the guard band.
inline std::vector<double> sample_levels(const HamiltonianSpec& spec, const Edge& e,
                                         const TabulationOptions& opt) {
  const double g = opt.guard * spec.scale();
  const double hi = e.bounded() ? e.b - g : e.a + opt.tail_span;
  return chebyshev_nodes(e.a + g, hi, opt.samples);
}

/// Per-edge tables (z, alpha, beta) of the reduced coefficients.
inline std::vector<CoefficientTable> sample_coefficients(const HamiltonianSpec& spec,
                                                         const ReebGraph& reeb,
                                                         const TabulationOptions& opt = {}) {
  if (opt.samples < 16) throw Error(ErrorCode::InvalidConfig, "need at least 16 samples per edge");
  std::vector<CoefficientTable> tables;
  for (std::size_t k = 0; k < reeb.graph.num_edges(); ++k) {
    CoefficientTable t;
    for (double z : sample_levels(spec, reeb.graph.edges()[k], opt)) {
      const auto r = reduce_at(spec, reeb, k, z, opt.trace);
      t.z.push_back(z);
      t.alpha.push_back(r.alpha);
      t.beta.push_back(r.beta);
    }
    tables.push_back(std::move(t));
  }
  return tables;
}

/// Coefficient field of H: interpolated samples plus the endpoint classes of
/// the vertex kinds (linear-vanishing alpha at minima, log-blowup beta at
/// saddles, linear growth toward infinity).
inline CoefficientField tabulate_coefficients(const HamiltonianSpec& spec, const ReebGraph& reeb,
                                              const TabulationOptions& opt = {}) {
  return tabulated_coefficients(reeb.graph, sample_coefficients(spec, reeb, opt));
}

/// phi^(z, k) = (1/beta) int phi |grad H|^-1 dl at one level.
inline double project_at(const HamiltonianSpec& spec, const ReebGraph& reeb, std::size_t edge,
                         double z, const std::function<double(const Vec2&)>& phi,
                         const TraceOptions& opt = {}) {
  const auto c = trace_level(spec, reeb, edge, z, opt);
  const double beta = contour_integrals(spec, c).beta;
  return contour_average_numerator(spec, c, phi) / beta;
}

/// Tabulated projection of a plane function onto the graph (held constant
/// beyond the outermost samples).
inline GraphFunction project_to_graph(const HamiltonianSpec& spec, const ReebGraph& reeb,
                                      const std::function<double(const Vec2&)>& phi,
                                      const TabulationOptions& opt = {}) {
  std::vector<TabulatedProfile> profiles;
  for (std::size_t k = 0; k < reeb.graph.num_edges(); ++k) {
    const Edge& e = reeb.graph.edges()[k];
    std::vector<double> zs = sample_levels(spec, e, opt);
    std::vector<double> vals;
    for (double z : zs) vals.push_back(project_at(spec, reeb, k, z, phi, opt.trace));
    profiles.emplace_back(zs, vals, e.a, e.b, AsymptoticClass::Constant, AsymptoticClass::Constant);
  }
  return [profiles](std::size_t k, double z) { return profiles[k](z); };
}

}  // namespace gspde
