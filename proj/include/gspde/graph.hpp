#pragma once

// Metric graphs whose edges are identified with intervals of the Hamiltonian
// value z, plus their compact truncations.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <queue>
#include <string>
#include <unordered_map>
#include <vector>

#include "gspde/error.hpp"

namespace gspde {

enum class VertexKind { Interior, Exterior, Infinity, TruncationBoundary };

inline const char* to_string(VertexKind kind) {
  switch (kind) {
    case VertexKind::Interior: return "interior";
    case VertexKind::Exterior: return "exterior";
    case VertexKind::Infinity: return "infinity";
    case VertexKind::TruncationBoundary: return "truncation-boundary";
  }
  return "?";
}

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

struct Vertex {
  int id = 0;
  VertexKind kind = VertexKind::Exterior;
  double z = 0.0;  // +inf for the infinity vertex
};

/// Edge I_k identified with [a, b]; b may be +inf for the one unbounded edge.
struct Edge {
  int id = 0;
  double a = 0.0;
  double b = 1.0;
  int v_at_a = 0;
  int v_at_b = 0;

  bool bounded() const { return std::isfinite(b); }
  double length() const { return b - a; }
};

/// Signed incidence entry used by the Kirchhoff flux condition.
struct StencilEntry {
  std::size_t edge = 0;  // position in MetricGraph::edges()
  int sign = 0;          // +1: z decreases toward the vertex, -1: z increases toward it

  bool operator==(const StencilEntry&) const = default;
};

struct GraphDescription {
  std::vector<Vertex> vertices;
  std::vector<Edge> edges;
  /// Accept interior vertices of any degree >= 2 (synthetic star graphs).
  bool relax_degree = false;
};

class MetricGraph {
 public:
  struct Incidence {
    std::size_t edge;
    bool at_upper_end;  // vertex sits at b (true) or at a (false)
  };

  const std::vector<Vertex>& vertices() const { return vertices_; }
  const std::vector<Edge>& edges() const { return edges_; }
  std::size_t num_vertices() const { return vertices_.size(); }
  std::size_t num_edges() const { return edges_.size(); }
  bool relax_degree() const { return relax_degree_; }

  std::size_t vertex_index(int id) const {
    auto it = index_of_.find(id);
    if (it == index_of_.end()) {
      throw Error(ErrorCode::PreconditionViolated, "unknown vertex id " + std::to_string(id));
    }
    return it->second;
  }
  const Vertex& vertex(int id) const { return vertices_[vertex_index(id)]; }

  const std::vector<Incidence>& incident(std::size_t vertex_pos) const {
    return incidence_[vertex_pos];
  }

  std::optional<std::size_t> unbounded_edge() const {
    for (std::size_t k = 0; k < edges_.size(); ++k) {
      if (!edges_[k].bounded()) return k;
    }
    return std::nullopt;
  }
  bool is_compact() const { return !unbounded_edge().has_value(); }

  /// Largest finite critical value (lower end of the unbounded edge when present).
  double max_finite_vertex_value() const {
    double h0 = -kInfinity;
    for (const auto& v : vertices_) {
      if (std::isfinite(v.z)) h0 = std::max(h0, v.z);
    }
    return h0;
  }

  double total_length() const {
    double len = 0.0;
    for (const auto& e : edges_) len += e.length();
    return len;
  }

  double min_edge_length() const {
    double len = kInfinity;
    for (const auto& e : edges_) len = std::min(len, e.length());
    return len;
  }

  /// Edge position by id.
  std::size_t edge_index(int id) const {
    for (std::size_t k = 0; k < edges_.size(); ++k) {
      if (edges_[k].id == id) return k;
    }
    throw Error(ErrorCode::PreconditionViolated, "unknown edge id " + std::to_string(id));
  }

  GraphDescription description() const { return {vertices_, edges_, relax_degree_}; }

 private:
  friend MetricGraph build_graph(const GraphDescription& spec);

  std::vector<Vertex> vertices_;
  std::vector<Edge> edges_;
  std::vector<std::vector<Incidence>> incidence_;
  std::unordered_map<int, std::size_t> index_of_;
  bool relax_degree_ = false;
};

namespace detail {

inline bool same_level(double x, double y) {
  if (!std::isfinite(x) || !std::isfinite(y)) return x == y;
  return std::abs(x - y) <= 1e-12 * std::max({1.0, std::abs(x), std::abs(y)});
}

}  // namespace detail

/// Validates and finalizes a graph description.
inline MetricGraph build_graph(const GraphDescription& spec) {
  MetricGraph g;
  g.vertices_ = spec.vertices;
  g.edges_ = spec.edges;
  g.relax_degree_ = spec.relax_degree;

  if (g.vertices_.empty()) throw Error(ErrorCode::DisconnectedGraph, "graph has no vertices");

  int infinity_count = 0;
  for (std::size_t i = 0; i < g.vertices_.size(); ++i) {
    const auto& v = g.vertices_[i];
    if (!g.index_of_.emplace(v.id, i).second) {
      throw Error(ErrorCode::ParseError, "duplicate vertex id " + std::to_string(v.id));
    }
    if (v.kind == VertexKind::Infinity) {
      ++infinity_count;
      if (v.z != kInfinity) {
        throw Error(ErrorCode::InconsistentInterval, "infinity vertex must carry z = inf");
      }
    } else if (!std::isfinite(v.z)) {
      throw Error(ErrorCode::InconsistentInterval,
                  "vertex " + std::to_string(v.id) + " has non-finite z");
    }
  }
  if (infinity_count > 1) {
    throw Error(ErrorCode::BadDegree, "more than one infinity vertex");
  }

  g.incidence_.assign(g.vertices_.size(), {});
  int unbounded = 0;
  for (std::size_t k = 0; k < g.edges_.size(); ++k) {
    const auto& e = g.edges_[k];
    const std::string tag = "edge " + std::to_string(e.id);
    if (g.index_of_.count(e.v_at_a) == 0 || g.index_of_.count(e.v_at_b) == 0) {
      throw Error(ErrorCode::InconsistentInterval, tag + " references an unknown vertex");
    }
    if (e.v_at_a == e.v_at_b) {
      throw Error(ErrorCode::InconsistentInterval, tag + " is a self-loop");
    }
    if (!std::isfinite(e.a) || !(e.a < e.b)) {
      throw Error(ErrorCode::InconsistentInterval, tag + " requires a < b with finite a");
    }
    const auto& va = g.vertex(e.v_at_a);
    const auto& vb = g.vertex(e.v_at_b);
    if (!detail::same_level(va.z, e.a) || !detail::same_level(vb.z, e.b)) {
      throw Error(ErrorCode::InconsistentInterval,
                  tag + " interval does not match its vertex z-coordinates");
    }
    if (!e.bounded()) {
      ++unbounded;
      if (vb.kind != VertexKind::Infinity) {
        throw Error(ErrorCode::InconsistentInterval, tag + " is unbounded but not at infinity");
      }
    }
    g.incidence_[g.vertex_index(e.v_at_a)].push_back({k, false});
    g.incidence_[g.vertex_index(e.v_at_b)].push_back({k, true});
  }
  if (unbounded > 1) {
    throw Error(ErrorCode::InconsistentInterval, "at most one unbounded edge is allowed");
  }

  for (std::size_t i = 0; i < g.vertices_.size(); ++i) {
    const auto& v = g.vertices_[i];
    const std::size_t degree = g.incidence_[i].size();
    bool ok = false;
    switch (v.kind) {
      case VertexKind::Interior:
        ok = spec.relax_degree ? degree >= 2 : degree == 3;
        break;
      case VertexKind::Exterior:
      case VertexKind::Infinity:
      case VertexKind::TruncationBoundary:
        ok = degree == 1;
        break;
    }
    if (!ok) {
      throw Error(ErrorCode::BadDegree, "vertex " + std::to_string(v.id) + " (" +
                                            to_string(v.kind) + ") has degree " +
                                            std::to_string(degree));
    }
  }

  // connectivity
  std::vector<bool> seen(g.vertices_.size(), false);
  std::queue<std::size_t> frontier;
  frontier.push(0);
  seen[0] = true;
  std::size_t reached = 1;
  while (!frontier.empty()) {
    const std::size_t v = frontier.front();
    frontier.pop();
    for (const auto& inc : g.incidence_[v]) {
      const auto& e = g.edges_[inc.edge];
      const std::size_t other = g.vertex_index(inc.at_upper_end ? e.v_at_a : e.v_at_b);
      if (!seen[other]) {
        seen[other] = true;
        ++reached;
        frontier.push(other);
      }
    }
  }
  if (reached != g.vertices_.size()) {
    throw Error(ErrorCode::DisconnectedGraph,
                std::to_string(g.vertices_.size() - reached) + " vertices unreachable");
  }
  return g;
}

/// Compact graph Gamma^R: the unbounded edge is clipped to [H0, R+1] and the
/// infinity vertex is replaced by a truncation-boundary vertex at z = R+1.
class TruncatedGraph {
 public:
  const MetricGraph& base() const { return base_; }
  const MetricGraph& graph() const { return graph_; }
  double R() const { return R_; }
  double H0() const { return H0_; }
  std::size_t clipped_edge() const { return clipped_edge_; }
  int boundary_vertex_id() const { return boundary_vertex_id_; }

 private:
  friend TruncatedGraph truncate(const MetricGraph& g, double R);

  MetricGraph base_;
  MetricGraph graph_;
  double R_ = 0.0;
  double H0_ = 0.0;
  std::size_t clipped_edge_ = 0;
  int boundary_vertex_id_ = 0;
};

inline TruncatedGraph truncate(const MetricGraph& g, double R) {
  const auto unbounded = g.unbounded_edge();
  if (!unbounded) throw Error(ErrorCode::NoUnboundedEdge, "graph is already compact");
  const Edge& last = g.edges()[*unbounded];
  const double h0 = last.a;
  const double tol = 1e-12 * std::max(1.0, std::abs(h0));
  if (!(R > h0 + tol)) {
    throw Error(ErrorCode::RTooSmall,
                "R = " + std::to_string(R) + " must exceed H0 = " + std::to_string(h0));
  }

  GraphDescription desc;
  desc.relax_degree = g.relax_degree();
  int max_id = 0;
  for (const auto& v : g.vertices()) max_id = std::max(max_id, v.id);
  const int infinity_id = last.v_at_b;
  for (const auto& v : g.vertices()) {
    if (v.id != infinity_id) desc.vertices.push_back(v);
  }
  const int new_id = max_id + 1;
  desc.vertices.push_back({new_id, VertexKind::TruncationBoundary, R + 1.0});
  desc.edges = g.edges();
  desc.edges[*unbounded].b = R + 1.0;
  desc.edges[*unbounded].v_at_b = new_id;

  TruncatedGraph t;
  t.base_ = g;
  t.graph_ = build_graph(desc);
  t.R_ = R;
  t.H0_ = h0;
  t.clipped_edge_ = *unbounded;
  t.boundary_vertex_id_ = new_id;
  return t;
}

/// Incidence sign Phi_{k,i} of edge `edge` at vertex `vertex_id`.
inline int incidence_sign(const MetricGraph& g, std::size_t edge, int vertex_id) {
  const Edge& e = g.edges()[edge];
  if (e.v_at_a == vertex_id) return +1;  // moving toward a decreases z
  if (e.v_at_b == vertex_id) return -1;
  throw Error(ErrorCode::PreconditionViolated, "edge not incident to vertex");
}

/// Signed incidence list for the flux condition at a vertex. Empty at
/// exterior vertices, where alpha vanishes and the condition is vacuous.
inline std::vector<StencilEntry> kirchhoff_stencil(const MetricGraph& g, int vertex_id) {
  const std::size_t pos = g.vertex_index(vertex_id);
  const Vertex& v = g.vertices()[pos];
  std::vector<StencilEntry> out;
  if (v.kind == VertexKind::Exterior || v.kind == VertexKind::Infinity) return out;
  for (const auto& inc : g.incident(pos)) {
    out.push_back({inc.edge, inc.at_upper_end ? -1 : +1});
  }
  return out;
}

/// Interval [0,1] with two exterior vertices.
inline MetricGraph interval_graph(double a = 0.0, double b = 1.0) {
  GraphDescription d;
  d.vertices = {{1, VertexKind::Exterior, a}, {2, VertexKind::Exterior, b}};
  d.edges = {{1, a, b, 1, 2}};
  return build_graph(d);
}

/// Single unbounded edge [z0, inf) from an extremum (the harmonic Hamiltonian graph).
inline MetricGraph half_line_graph(double z0 = 0.0) {
  GraphDescription d;
  d.vertices = {{1, VertexKind::Exterior, z0}, {2, VertexKind::Infinity, kInfinity}};
  d.edges = {{1, z0, kInfinity, 1, 2}};
  return build_graph(d);
}

/// Three minima O1..O3 merging at two saddles O4 < O5, then the unbounded edge.
/// Critical values default to a configuration with well-separated levels.
inline MetricGraph three_well_graph(double m1 = 0.0, double m2 = 0.3, double m3 = 0.6,
                                    double s1 = 1.2, double s2 = 2.0) {
  GraphDescription d;
  d.vertices = {{1, VertexKind::Exterior, m1},  {2, VertexKind::Exterior, m2},
                {3, VertexKind::Exterior, m3},  {4, VertexKind::Interior, s1},
                {5, VertexKind::Interior, s2},  {6, VertexKind::Infinity, kInfinity}};
  d.edges = {{1, m1, s1, 1, 4},
             {2, m2, s1, 2, 4},
             {3, m3, s2, 3, 5},
             {4, s1, s2, 4, 5},
             {5, s2, kInfinity, 5, 6}};
  return build_graph(d);
}

/// Star with `arms` edges [0, 1] meeting at an interior vertex at z = 1
/// (requires the relaxed degree rule unless arms == 3).
inline MetricGraph star_graph(std::size_t arms) {
  GraphDescription d;
  d.relax_degree = arms != 3;
  const int centre = static_cast<int>(arms) + 1;
  for (std::size_t i = 0; i < arms; ++i) {
    d.vertices.push_back({static_cast<int>(i) + 1, VertexKind::Exterior, 0.0});
    d.edges.push_back({static_cast<int>(i) + 1, 0.0, 1.0, static_cast<int>(i) + 1, centre});
  }
  d.vertices.push_back({centre, VertexKind::Interior, 1.0});
  return build_graph(d);
}

}  // namespace gspde
