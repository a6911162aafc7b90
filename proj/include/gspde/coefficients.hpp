#pragma once

// Coefficient fields alpha, beta on the graph, the weight gamma, the cut-off
// eta_R, truncation alpha^R = alpha * eta_R, the localized regularization
// (alpha^{R,delta}, beta^delta), and samplers that check their structural bounds.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "gspde/error.hpp"
#include "gspde/graph.hpp"
#include "gspde/tabulation.hpp"

namespace gspde {

/// Scalar function on a graph: (edge position, z) -> value.
using GraphFunction = std::function<double(std::size_t, double)>;

/// Function of z alone; automatically continuous at every vertex.
inline GraphFunction level_function(std::function<double(double)> f) {
  return [f = std::move(f)](std::size_t, double z) { return f(z); };
}

namespace detail {

/// Derivative by finite differences with step 1e-6 * max(1, |z|), one-sided
/// (second order) when the central stencil would leave [lo, hi].
inline double fd_derivative(const std::function<double(double)>& f, double z, double lo,
                            double hi) {
  const double h = 1e-6 * std::max(1.0, std::abs(z));
  if (z - h >= lo && z + h <= hi) return (f(z + h) - f(z - h)) / (2.0 * h);
  if (z - h < lo) return (-3.0 * f(z) + 4.0 * f(z + h) - f(z + 2.0 * h)) / (2.0 * h);
  return (3.0 * f(z) - 4.0 * f(z - h) + f(z - 2.0 * h)) / (2.0 * h);
}

}  // namespace detail

struct EdgeCoefficients {
  double a = 0.0;
  double b = 1.0;
  std::function<double(double)> alpha;
  std::function<double(double)> beta;
  std::function<double(double)> dalpha;  // optional; finite differences otherwise
  AsymptoticClass alpha_at_a = AsymptoticClass::Constant;
  AsymptoticClass alpha_at_b = AsymptoticClass::Constant;
  AsymptoticClass beta_at_a = AsymptoticClass::Constant;
  AsymptoticClass beta_at_b = AsymptoticClass::Constant;
};

class CoefficientField {
 public:
  CoefficientField() = default;
  explicit CoefficientField(std::vector<EdgeCoefficients> edges) : edges_(std::move(edges)) {}

  std::size_t num_edges() const { return edges_.size(); }
  const EdgeCoefficients& edge(std::size_t k) const { return edges_[k]; }

  double alpha(std::size_t k, double z) const { return edges_[k].alpha(z); }
  double beta(std::size_t k, double z) const { return edges_[k].beta(z); }
  double dalpha(std::size_t k, double z) const {
    const auto& e = edges_[k];
    if (e.dalpha) return e.dalpha(z);
    return detail::fd_derivative(e.alpha, z, e.a, e.b);
  }

  GraphFunction alpha_function() const {
    return [self = *this](std::size_t k, double z) { return self.alpha(k, z); };
  }
  GraphFunction beta_function() const {
    return [self = *this](std::size_t k, double z) { return self.beta(k, z); };
  }

  /// Same alpha and beta on every edge of `g` (classes marked constant).
  static CoefficientField uniform(const MetricGraph& g, std::function<double(double)> alpha,
                                  std::function<double(double)> beta,
                                  std::function<double(double)> dalpha = {}) {
    std::vector<EdgeCoefficients> edges;
    for (const auto& e : g.edges()) {
      EdgeCoefficients c;
      c.a = e.a;
      c.b = e.b;
      c.alpha = alpha;
      c.beta = beta;
      c.dalpha = dalpha;
      edges.push_back(std::move(c));
    }
    return CoefficientField(std::move(edges));
  }

 private:
  std::vector<EdgeCoefficients> edges_;
};

// ---------------------------------------------------------------------------
// Analytic asymptotic profiles
// ---------------------------------------------------------------------------

struct EndpointModel {
  AsymptoticClass alpha_class = AsymptoticClass::Constant;
  double alpha_const = 1.0;
  AsymptoticClass beta_class = AsymptoticClass::Constant;
  double beta_const = 1.0;
};

struct EdgeProfile {
  EndpointModel at_a;
  EndpointModel at_b;  // for the unbounded edge: the behaviour as z -> inf
};

struct AnalyticProfile {
  std::vector<EdgeProfile> edges;
};

/// Constants used when a profile is derived from vertex kinds.
struct ProfileConstants {
  double alpha_extremum_slope = 1.0;  // alpha ~ c |z - z_e|
  double alpha_saddle = 1.0;          // alpha ~ c
  double alpha_infinity_slope = 1.0;  // alpha ~ c z
  double beta_extremum = 1.0;         // beta ~ c
  double beta_saddle_log = 1.0;       // beta ~ c |log|z - z_s||
  double beta_infinity = 1.0;         // beta ~ c
};

inline EndpointModel endpoint_model_for(VertexKind kind, const ProfileConstants& c) {
  switch (kind) {
    case VertexKind::Exterior:
    case VertexKind::TruncationBoundary:
      return {AsymptoticClass::LinearVanishing, c.alpha_extremum_slope, AsymptoticClass::Constant,
              c.beta_extremum};
    case VertexKind::Interior:
      return {AsymptoticClass::Constant, c.alpha_saddle, AsymptoticClass::LogBlowup,
              c.beta_saddle_log};
    case VertexKind::Infinity:
      return {AsymptoticClass::LinearGrowth, c.alpha_infinity_slope, AsymptoticClass::Constant,
              c.beta_infinity};
  }
  return {};
}

/// Profile whose endpoint classes follow the vertex kinds.
inline AnalyticProfile default_profile(const MetricGraph& g, const ProfileConstants& c = {}) {
  AnalyticProfile p;
  for (const auto& e : g.edges()) {
    p.edges.push_back({endpoint_model_for(g.vertex(e.v_at_a).kind, c),
                       endpoint_model_for(g.vertex(e.v_at_b).kind, c)});
  }
  return p;
}

namespace detail {

inline void check_endpoint_class(const EndpointModel& m, VertexKind kind, int edge_id) {
  const std::string where = "edge " + std::to_string(edge_id) + " at " + to_string(kind) + " vertex";
  AsymptoticClass want_alpha = AsymptoticClass::Constant;
  AsymptoticClass want_beta = AsymptoticClass::Constant;
  switch (kind) {
    case VertexKind::Exterior:
    case VertexKind::TruncationBoundary:
      want_alpha = AsymptoticClass::LinearVanishing;
      want_beta = AsymptoticClass::Constant;
      break;
    case VertexKind::Interior:
      want_alpha = AsymptoticClass::Constant;
      want_beta = AsymptoticClass::LogBlowup;
      break;
    case VertexKind::Infinity:
      want_alpha = AsymptoticClass::LinearGrowth;
      want_beta = AsymptoticClass::Constant;
      break;
  }
  if (m.alpha_class != want_alpha) {
    throw Error(ErrorCode::InconsistentClass, where + ": alpha must be " + to_string(want_alpha));
  }
  if (m.beta_class != want_beta) {
    throw Error(ErrorCode::InconsistentClass, where + ": beta must be " + to_string(want_beta));
  }
  if (!(m.alpha_const > 0.0) || !(m.beta_const > 0.0)) {
    throw Error(ErrorCode::InconsistentClass, where + ": constants must be positive");
  }
}

}  // namespace detail

/// alpha and beta with the prescribed endpoint behaviour, blended linearly
/// along bounded edges. On a bounded edge [a, b] with w_a = (b - z)/L:
///   alpha = w_a A_a(z) + w_b A_b(z),  A = c|z - end| or c,
///   beta  = w_a B_a(z) + w_b B_b(z),  B = c or c log(1 + L/|z - end|).
/// On the unbounded edge alpha = A_a(z) + c_inf (z - a), with A_a = 0 when
/// alpha vanishes at a (the growth constant is then the slope), and beta
/// relaxes from its lower-end model to the constant c_inf.
inline CoefficientField analytic_coefficients(const MetricGraph& g, const AnalyticProfile& p) {
  if (p.edges.size() != g.num_edges()) {
    throw Error(ErrorCode::InvalidConfig, "profile edge count does not match graph");
  }
  std::vector<EdgeCoefficients> out;
  for (std::size_t k = 0; k < g.num_edges(); ++k) {
    const Edge& e = g.edges()[k];
    const EdgeProfile& ep = p.edges[k];
    detail::check_endpoint_class(ep.at_a, g.vertex(e.v_at_a).kind, e.id);
    detail::check_endpoint_class(ep.at_b, g.vertex(e.v_at_b).kind, e.id);

    EdgeCoefficients c;
    c.a = e.a;
    c.b = e.b;
    c.alpha_at_a = ep.at_a.alpha_class;
    c.alpha_at_b = ep.at_b.alpha_class;
    c.beta_at_a = ep.at_a.beta_class;
    c.beta_at_b = ep.at_b.beta_class;
    const double a = e.a;
    const double b = e.b;
    const EndpointModel ma = ep.at_a;
    const EndpointModel mb = ep.at_b;

    if (e.bounded()) {
      const double L = b - a;
      auto A = [](const EndpointModel& m, double dist) {
        return m.alpha_class == AsymptoticClass::LinearVanishing ? m.alpha_const * dist
                                                                 : m.alpha_const;
      };
      auto dA = [](const EndpointModel& m) {
        return m.alpha_class == AsymptoticClass::LinearVanishing ? m.alpha_const : 0.0;
      };
      auto B = [L](const EndpointModel& m, double dist) {
        return m.beta_class == AsymptoticClass::LogBlowup
                   ? m.beta_const * std::log1p(L / std::max(dist, 1e-300))
                   : m.beta_const;
      };
      c.alpha = [=](double z) {
        const double wa = (b - z) / L, wb = (z - a) / L;
        return wa * A(ma, std::abs(z - a)) + wb * A(mb, std::abs(b - z));
      };
      c.dalpha = [=](double z) {
        const double wa = (b - z) / L, wb = (z - a) / L;
        return -A(ma, std::abs(z - a)) / L + wa * dA(ma) + A(mb, std::abs(b - z)) / L -
               wb * dA(mb);
      };
      c.beta = [=](double z) {
        const double wa = (b - z) / L, wb = (z - a) / L;
        return wa * B(ma, std::abs(z - a)) + wb * B(mb, std::abs(b - z));
      };
    } else {
      const double base = ma.alpha_class == AsymptoticClass::LinearVanishing ? 0.0 : ma.alpha_const;
      const double slope = mb.alpha_const;
      c.alpha = [=](double z) { return base + slope * (z - a); };
      c.dalpha = [=](double) { return slope; };
      const double binf = mb.beta_const;
      if (ma.beta_class == AsymptoticClass::LogBlowup) {
        c.beta = [=](double z) {
          return ma.beta_const * std::log1p(1.0 / std::max(z - a, 1e-300)) + binf;
        };
      } else {
        c.beta = [=](double z) {
          const double w = std::exp(-(z - a));
          return ma.beta_const * w + binf * (1.0 - w);
        };
      }
    }
    out.push_back(std::move(c));
  }
  return CoefficientField(std::move(out));
}

/// alpha = 4 pi z, beta = 2 pi on [0, inf): the reduction of H = |x|^2 / 2.
inline CoefficientField harmonic_coefficients(const MetricGraph& half_line) {
  ProfileConstants c;
  c.alpha_extremum_slope = 4.0 * M_PI;
  c.alpha_infinity_slope = 4.0 * M_PI;
  c.beta_extremum = 2.0 * M_PI;
  c.beta_infinity = 2.0 * M_PI;
  return analytic_coefficients(half_line, default_profile(half_line, c));
}

/// Coefficients backed by per-edge tables (z, alpha, beta); endpoint classes
/// follow the vertex kinds.
inline CoefficientField tabulated_coefficients(const MetricGraph& g,
                                               const std::vector<CoefficientTable>& tables) {
  if (tables.size() != g.num_edges()) {
    throw Error(ErrorCode::InvalidConfig, "need one coefficient table per edge");
  }
  ProfileConstants unit;
  std::vector<EdgeCoefficients> out;
  for (std::size_t k = 0; k < g.num_edges(); ++k) {
    const Edge& e = g.edges()[k];
    const auto ma = endpoint_model_for(g.vertex(e.v_at_a).kind, unit);
    const auto mb = endpoint_model_for(g.vertex(e.v_at_b).kind, unit);
    TabulatedProfile ta(tables[k].z, tables[k].alpha, e.a, e.b, ma.alpha_class, mb.alpha_class);
    TabulatedProfile tb(tables[k].z, tables[k].beta, e.a, e.b, ma.beta_class, mb.beta_class);
    EdgeCoefficients c;
    c.a = e.a;
    c.b = e.b;
    c.alpha = [ta](double z) { return ta(z); };
    c.dalpha = [ta](double z) { return ta.derivative(z); };
    c.beta = [tb](double z) { return tb(z); };
    c.alpha_at_a = ma.alpha_class;
    c.alpha_at_b = mb.alpha_class;
    c.beta_at_a = ma.beta_class;
    c.beta_at_b = mb.beta_class;
    out.push_back(std::move(c));
  }
  return CoefficientField(std::move(out));
}

// ---------------------------------------------------------------------------
// Weight gamma
// ---------------------------------------------------------------------------

enum class WeightFamilyKind { Unit, ExpDecay, PolyDecay, Custom };

/// gamma_k = 1 on every edge except the unbounded (or clipped) one, where
///   exp_decay:  exp(-rho1 ((z - H0 + 1)^rho2 - 1)),  rho1 > 0, 0 < rho2 < 1/2
///   poly_decay: (z - H0 + 1)^(-rho3),                rho3 > 1
class WeightFunction {
 public:
  WeightFunction() = default;

  static WeightFunction unit() { return WeightFunction(); }

  static WeightFunction exp_decay(std::size_t tail_edge, double H0, double rho1, double rho2) {
    if (!(rho1 > 0.0) || !(rho2 > 0.0 && rho2 < 0.5)) {
      throw Error(ErrorCode::InvalidConfig, "exp_decay needs rho1 > 0 and 0 < rho2 < 1/2");
    }
    WeightFunction w;
    w.kind_ = WeightFamilyKind::ExpDecay;
    w.tail_edge_ = tail_edge;
    w.H0_ = H0;
    w.rho1_ = rho1;
    w.rho2_ = rho2;
    return w;
  }

  static WeightFunction poly_decay(std::size_t tail_edge, double H0, double rho3) {
    if (!(rho3 > 1.0)) throw Error(ErrorCode::InvalidConfig, "poly_decay needs rho3 > 1");
    WeightFunction w;
    w.kind_ = WeightFamilyKind::PolyDecay;
    w.tail_edge_ = tail_edge;
    w.H0_ = H0;
    w.rho3_ = rho3;
    return w;
  }

  /// Arbitrary gamma; the derivative falls back to finite differences.
  static WeightFunction custom(GraphFunction gamma, GraphFunction dgamma = {}) {
    WeightFunction w;
    w.kind_ = WeightFamilyKind::Custom;
    w.gamma_ = std::move(gamma);
    w.dgamma_ = std::move(dgamma);
    return w;
  }

  WeightFamilyKind kind() const { return kind_; }
  bool is_unit() const { return kind_ == WeightFamilyKind::Unit; }
  double rho3() const { return rho3_; }

  double operator()(std::size_t k, double z) const {
    switch (kind_) {
      case WeightFamilyKind::Unit:
        return 1.0;
      case WeightFamilyKind::ExpDecay:
        if (k != tail_edge_) return 1.0;
        return std::exp(-rho1_ * (std::pow(z - H0_ + 1.0, rho2_) - 1.0));
      case WeightFamilyKind::PolyDecay:
        if (k != tail_edge_) return 1.0;
        return std::pow(z - H0_ + 1.0, -rho3_);
      case WeightFamilyKind::Custom:
        return gamma_(k, z);
    }
    return 1.0;
  }

  double derivative(std::size_t k, double z) const {
    switch (kind_) {
      case WeightFamilyKind::Unit:
        return 0.0;
      case WeightFamilyKind::ExpDecay:
        if (k != tail_edge_) return 0.0;
        return -rho1_ * rho2_ * std::pow(z - H0_ + 1.0, rho2_ - 1.0) * (*this)(k, z);
      case WeightFamilyKind::PolyDecay:
        if (k != tail_edge_) return 0.0;
        return -rho3_ * std::pow(z - H0_ + 1.0, -rho3_ - 1.0);
      case WeightFamilyKind::Custom: {
        if (dgamma_) return dgamma_(k, z);
        const double h = 1e-6 * std::max(1.0, std::abs(z));
        return (gamma_(k, z + h) - gamma_(k, z - h)) / (2.0 * h);
      }
    }
    return 0.0;
  }

 private:
  WeightFamilyKind kind_ = WeightFamilyKind::Unit;
  std::size_t tail_edge_ = 0;
  double H0_ = 0.0;
  double rho1_ = 1.0, rho2_ = 0.25, rho3_ = 3.0;
  GraphFunction gamma_, dgamma_;
};

// ---------------------------------------------------------------------------
// Cut-off and truncation
// ---------------------------------------------------------------------------

enum class CutOffKind { Linear, SmoothedLinear };

/// eta_R = 1 on [0, R], 0 beyond R + 1. Linear: R + 1 - z on [R, R+1]
/// (K0 = -1). Smoothed-linear: 1 - (z - R)^2, C^1 at R with K0 = -2.
class CutOff {
 public:
  CutOff(double R, CutOffKind kind) : R_(R), kind_(kind) {}

  double R() const { return R_; }
  CutOffKind kind() const { return kind_; }

  double operator()(double z) const {
    if (z <= R_) return 1.0;
    if (z >= R_ + 1.0) return 0.0;
    const double s = z - R_;
    return kind_ == CutOffKind::Linear ? 1.0 - s : 1.0 - s * s;
  }

  /// Derivative; at z = R + 1 the left derivative K0.
  double derivative(double z) const {
    if (z <= R_ || z > R_ + 1.0) return 0.0;
    const double s = z - R_;
    return kind_ == CutOffKind::Linear ? -1.0 : -2.0 * s;
  }

  double K0() const { return kind_ == CutOffKind::Linear ? -1.0 : -2.0; }

 private:
  double R_;
  CutOffKind kind_;
};

inline CutOff make_cutoff(double R, CutOffKind kind) {
  if (!(R > 0.0)) throw Error(ErrorCode::RTooSmall, "cut-off needs R > 0");
  return CutOff(R, kind);
}

/// alpha^R = alpha * eta_R on the edges of the truncated graph.
inline CoefficientField truncate_alpha(const CoefficientField& field, const TruncatedGraph& tg,
                                       const CutOff& eta) {
  if (field.num_edges() != tg.graph().num_edges()) {
    throw Error(ErrorCode::PreconditionViolated, "field and truncated graph differ in edges");
  }
  std::vector<EdgeCoefficients> out;
  for (std::size_t k = 0; k < field.num_edges(); ++k) {
    EdgeCoefficients c = field.edge(k);
    const Edge& e = tg.graph().edges()[k];
    const double lo = c.a;
    const double hi = c.b;
    c.b = e.b;
    if (k == tg.clipped_edge()) c.alpha_at_b = AsymptoticClass::LinearVanishing;
    auto alpha = c.alpha;
    auto dalpha = c.dalpha ? c.dalpha : std::function<double(double)>([alpha, lo, hi](double z) {
      return detail::fd_derivative(alpha, z, lo, hi);
    });
    c.alpha = [alpha, eta](double z) { return alpha(z) * eta(z); };
    c.dalpha = [alpha, dalpha, eta](double z) {
      return dalpha(z) * eta(z) + alpha(z) * eta.derivative(z);
    };
    out.push_back(std::move(c));
  }
  return CoefficientField(std::move(out));
}

// ---------------------------------------------------------------------------
// Regularization
// ---------------------------------------------------------------------------

/// Cosine bump: 1 on [0, 1], (cos((s - 1) pi) + 1) / 2 on (1, 2), 0 beyond.
struct CosineBump {
  double operator()(double s) const {
    if (s <= 1.0) return 1.0;
    if (s >= 2.0) return 0.0;
    return 0.5 * (std::cos((s - 1.0) * M_PI) + 1.0);
  }
  double derivative(double s) const {
    if (s <= 1.0 || s >= 2.0) return 0.0;
    return -0.5 * M_PI * std::sin((s - 1.0) * M_PI);
  }
};

/// (alpha^{R,delta}, beta^delta) on Gamma^R. Each edge is split into two
/// half-edges, each touching one vertex: alpha is lifted by delta*bump near
/// exterior (and truncation-boundary) vertices, beta is frozen at its value a
/// distance delta into the edge near interior vertices.
class RegularizedPair {
 public:
  RegularizedPair(CoefficientField truncated, const TruncatedGraph& tg, double delta)
      : RegularizedPair(std::move(truncated), tg.graph(), delta, tg.clipped_edge(), tg.H0()) {}

  /// Compact graph without a clipped edge (every edge split at its midpoint).
  RegularizedPair(CoefficientField field, const MetricGraph& g, double delta)
      : RegularizedPair(std::move(field), g, delta, g.num_edges(), 0.0) {}

  RegularizedPair(CoefficientField truncated, const MetricGraph& g, double delta,
                  std::size_t clipped, double H0)
      : field_(std::move(truncated)), graph_(g), delta_(delta) {
    if (!graph_.is_compact()) {
      throw Error(ErrorCode::PreconditionViolated, "regularization needs a compact graph");
    }
    delta_min_ = 0.25 * graph_.min_edge_length();
    if (!(delta > 0.0) || !(delta < delta_min_)) {
      throw Error(ErrorCode::DeltaTooLarge, "delta = " + std::to_string(delta) +
                                                " must lie in (0, delta_min = " +
                                                std::to_string(delta_min_) + ")");
    }
    for (std::size_t k = 0; k < graph_.num_edges(); ++k) {
      const Edge& e = graph_.edges()[k];
      Half h;
      h.split = k == clipped ? H0 + 1.0 : 0.5 * (e.a + e.b);
      h.lower_kind = graph_.vertex(e.v_at_a).kind;
      h.upper_kind = graph_.vertex(e.v_at_b).kind;
      h.a = e.a;
      h.b = e.b;
      // frozen beta values at a +/- delta
      h.beta_frozen_lower = field_.beta(k, e.a + delta);
      h.beta_frozen_upper = field_.beta(k, e.b - delta);
      halves_.push_back(h);
    }
  }

  double delta() const { return delta_; }
  double delta_min() const { return delta_min_; }
  const MetricGraph& graph() const { return graph_; }
  const CoefficientField& truncated_field() const { return field_; }
  double split_point(std::size_t k) const { return halves_[k].split; }

  double alpha_R(std::size_t k, double z) const { return field_.alpha(k, z); }
  double beta_raw(std::size_t k, double z) const { return field_.beta(k, z); }

  double alpha(std::size_t k, double z) const {
    const auto [kind, end] = touching(k, z);
    double v = field_.alpha(k, z);
    if (is_exterior(kind)) v += delta_ * bump_(std::abs(z - end) / delta_);
    return v;
  }

  double dalpha(std::size_t k, double z) const {
    const auto [kind, end] = touching(k, z);
    double d = field_.dalpha(k, z);
    if (is_exterior(kind)) {
      const double sgn = z >= end ? 1.0 : -1.0;
      d += sgn * bump_.derivative(std::abs(z - end) / delta_);
    }
    return d;
  }

  double beta(std::size_t k, double z) const {
    const auto [kind, end] = touching(k, z);
    if (kind != VertexKind::Interior) return field_.beta(k, z);
    const double w = bump_(std::abs(z - end) / delta_);
    if (w == 0.0) return field_.beta(k, z);
    const Half& h = halves_[k];
    const double frozen = end == h.a ? h.beta_frozen_lower : h.beta_frozen_upper;
    if (w == 1.0) return frozen;
    return w * frozen + (1.0 - w) * field_.beta(k, z);
  }

  // the returned functions hold their own copy of the pair
  GraphFunction alpha_function() const {
    return [self = std::make_shared<const RegularizedPair>(*this)](std::size_t k, double z) {
      return self->alpha(k, z);
    };
  }
  GraphFunction beta_function() const {
    return [self = std::make_shared<const RegularizedPair>(*this)](std::size_t k, double z) {
      return self->beta(k, z);
    };
  }

 private:
  struct Half {
    double a, b, split;
    VertexKind lower_kind, upper_kind;
    double beta_frozen_lower, beta_frozen_upper;
  };

  static bool is_exterior(VertexKind kind) {
    return kind == VertexKind::Exterior || kind == VertexKind::TruncationBoundary;
  }

  std::pair<VertexKind, double> touching(std::size_t k, double z) const {
    const Half& h = halves_[k];
    return z <= h.split ? std::make_pair(h.lower_kind, h.a) : std::make_pair(h.upper_kind, h.b);
  }

  CoefficientField field_;
  MetricGraph graph_;
  double delta_;
  double delta_min_ = 0.0;
  std::vector<Half> halves_;
  CosineBump bump_;
};

/// `truncated` carries alpha^R (see truncate_alpha) and beta.
inline RegularizedPair regularize(const CoefficientField& truncated, const TruncatedGraph& tg,
                                  double delta) {
  return RegularizedPair(truncated, tg, delta);
}

inline RegularizedPair regularize(const CoefficientField& field, const MetricGraph& compact,
                                  double delta) {
  return RegularizedPair(field, compact, delta);
}

inline double delta_min(const TruncatedGraph& tg) { return 0.25 * tg.graph().min_edge_length(); }

// ---------------------------------------------------------------------------
// Assumption samplers
// ---------------------------------------------------------------------------

/// Interior sample points of [a, b]: n cell midpoints.
inline std::vector<double> interior_grid(double a, double b, std::size_t n) {
  std::vector<double> z(n);
  for (std::size_t i = 0; i < n; ++i) z[i] = a + (b - a) * (static_cast<double>(i) + 0.5) / n;
  return z;
}

struct WeightCompatibilityReport {
  double kappa = 0.0;           // sup alpha |gamma'|^2 / (beta gamma^2) at N points per edge
  double kappa_refined = 0.0;   // same at 2N points
  double kappa_extended = 0.0;  // 2N points, unbounded edge sampled to twice the depth
  double refinement_ratio = 1.0;
  double extension_ratio = 1.0;
  bool pass = false;
  std::string note;
};

namespace detail {

inline double ratio_or_one(double num, double den) {
  if (den == 0.0 && num == 0.0) return 1.0;
  if (den == 0.0) return std::numeric_limits<double>::infinity();
  return num / den;
}

inline double kappa_sup(const GraphFunction& alpha, const GraphFunction& beta,
                        const WeightFunction& gamma, const MetricGraph& g, std::size_t n,
                        double z_max) {
  double sup = 0.0;
  for (std::size_t k = 0; k < g.num_edges(); ++k) {
    const Edge& e = g.edges()[k];
    const double hi = e.bounded() ? e.b : std::max(z_max, e.a + 1.0);
    for (double z : interior_grid(e.a, hi, n)) {
      const double gm = gamma(k, z);
      const double dg = gamma.derivative(k, z);
      const double v = alpha(k, z) * dg * dg / (beta(k, z) * gm * gm);
      if (!std::isfinite(v)) return std::numeric_limits<double>::infinity();
      sup = std::max(sup, v);
    }
  }
  return sup;
}

}  // namespace detail

/// Samples kappa on [0, z_max] of a non-compact graph (or all of a compact
/// one). Passes when the estimate is finite and changes by less than 10%
/// under grid refinement and (for an unbounded edge) under doubling z_max.
inline WeightCompatibilityReport validate_weight_compatibility(const MetricGraph& g,
                                                               const GraphFunction& alpha,
                                                               const GraphFunction& beta,
                                                               const WeightFunction& gamma,
                                                               double z_max = 64.0,
                                                               std::size_t n = 1000) {
  WeightCompatibilityReport r;
  r.kappa = detail::kappa_sup(alpha, beta, gamma, g, n, z_max);
  r.kappa_refined = detail::kappa_sup(alpha, beta, gamma, g, 2 * n, z_max);
  r.kappa_extended = g.is_compact() ? r.kappa_refined
                                    : detail::kappa_sup(alpha, beta, gamma, g, 4 * n, 2.0 * z_max);
  r.refinement_ratio = detail::ratio_or_one(r.kappa_refined, r.kappa);
  r.extension_ratio = detail::ratio_or_one(r.kappa_extended, r.kappa_refined);
  r.pass = std::isfinite(r.kappa_extended) && r.refinement_ratio < 1.1 && r.extension_ratio < 1.1;
  if (!g.is_compact()) {
    r.note = "sampled on z <= " + std::to_string(2.0 * z_max) + " only";
  }
  return r;
}

inline WeightCompatibilityReport validate_weight_compatibility(const MetricGraph& g,
                                                               const CoefficientField& field,
                                                               const WeightFunction& gamma,
                                                               double z_max = 64.0,
                                                               std::size_t n = 1000) {
  return validate_weight_compatibility(g, field.alpha_function(), field.beta_function(), gamma,
                                       z_max, n);
}

/// kappa_1 for the regularized pair on Gamma^R.
inline WeightCompatibilityReport validate_weight_compatibility(const RegularizedPair& pair,
                                                               const WeightFunction& gamma,
                                                               std::size_t n = 1000) {
  return validate_weight_compatibility(pair.graph(), pair.alpha_function(), pair.beta_function(),
                                       gamma, 0.0, n);
}

struct RegularizationReport {
  double c1 = 0.0;  // min alpha^{R,delta}
  double c3 = 0.0;  // min beta (reference lower bound)
  double c4 = 0.0;  // max beta^delta
  double c5 = 0.0;  // max beta^delta / beta
  std::size_t alpha_lower_violations = 0;  // alpha^{R,delta} < alpha^R
  std::size_t alpha_upper_violations = 0;  // alpha^{R,delta} > alpha + 1
  std::size_t beta_lower_violations = 0;   // beta^delta < c3
  std::size_t beta_upper_violations = 0;   // beta^delta > c5_bound * beta
  bool pass = false;
};

/// Checks the regularization bounds with c0 = c2 = 1 on `n` points per edge.
/// `alpha_reg`, `beta_reg` default to the pair's own functions; passing
/// others supports fault injection. `c5_bound` is the admissible ratio
/// beta^delta / beta (2 for matched log constants).
inline RegularizationReport check_regularization(const RegularizedPair& pair,
                                                 const CoefficientField& untruncated,
                                                 GraphFunction alpha_reg = {},
                                                 GraphFunction beta_reg = {}, std::size_t n = 1000,
                                                 double c5_bound = 2.0) {
  if (!alpha_reg) alpha_reg = pair.alpha_function();
  if (!beta_reg) beta_reg = pair.beta_function();
  const MetricGraph& g = pair.graph();
  RegularizationReport r;
  r.c1 = std::numeric_limits<double>::infinity();
  double beta_inf = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < g.num_edges(); ++k) {
    const Edge& e = g.edges()[k];
    for (double z : interior_grid(e.a, e.b, n)) beta_inf = std::min(beta_inf, pair.beta_raw(k, z));
  }
  r.c3 = beta_inf;
  for (std::size_t k = 0; k < g.num_edges(); ++k) {
    const Edge& e = g.edges()[k];
    for (double z : interior_grid(e.a, e.b, n)) {
      const double ar = pair.alpha_R(k, z);
      const double ad = alpha_reg(k, z);
      const double a = untruncated.alpha(k, z);
      const double b = pair.beta_raw(k, z);
      const double bd = beta_reg(k, z);
      const double tol = 1e-12 * std::max(1.0, std::abs(a));
      r.c1 = std::min(r.c1, ad);
      r.c4 = std::max(r.c4, bd);
      r.c5 = std::max(r.c5, bd / b);
      if (ad < ar - tol) ++r.alpha_lower_violations;
      if (ad > a + 1.0 + tol) ++r.alpha_upper_violations;
      if (bd < r.c3 * (1.0 - 1e-12)) ++r.beta_lower_violations;
      if (bd > c5_bound * b * (1.0 + 1e-12)) ++r.beta_upper_violations;
    }
  }
  r.pass = r.c1 > 0.0 && r.alpha_lower_violations == 0 && r.alpha_upper_violations == 0 &&
           r.beta_lower_violations == 0 && r.beta_upper_violations == 0;
  return r;
}

}  // namespace gspde
