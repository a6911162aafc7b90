#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>

#include "gspde/graph.hpp"
#include "gspde/graph_io.hpp"

using namespace gspde;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no exception";
  return ErrorCode::InvalidConfig;
}

}  // namespace

TEST(Graph, IntervalIsValid) {
  auto g = interval_graph(0.0, 1.0);
  EXPECT_EQ(g.num_vertices(), 2u);
  EXPECT_EQ(g.num_edges(), 1u);
  EXPECT_TRUE(g.is_compact());
  EXPECT_DOUBLE_EQ(g.total_length(), 1.0);
}

TEST(Graph, ThreeWellTopology) {
  auto g = three_well_graph();
  EXPECT_EQ(g.num_vertices(), 6u);
  // a tree on 6 vertices
  EXPECT_EQ(g.num_edges(), 5u);
  for (const auto& v : g.vertices()) {
    if (v.kind == VertexKind::Interior) {
      EXPECT_EQ(g.incident(g.vertex_index(v.id)).size(), 3u);
    }
  }
  ASSERT_TRUE(g.unbounded_edge().has_value());
  EXPECT_DOUBLE_EQ(g.max_finite_vertex_value(), 2.0);
}

TEST(Graph, InteriorDegreeTwoRejected) {
  GraphDescription d;
  d.vertices = {{1, VertexKind::Exterior, 0.0}, {2, VertexKind::Interior, 1.0},
                {3, VertexKind::Exterior, 2.0}};
  d.edges = {{1, 0.0, 1.0, 1, 2}, {2, 1.0, 2.0, 2, 3}};
  EXPECT_EQ(code_of([&] { build_graph(d); }), ErrorCode::BadDegree);
  d.relax_degree = true;
  EXPECT_NO_THROW(build_graph(d));
}

TEST(Graph, DisconnectedRejected) {
  GraphDescription d;
  d.vertices = {{1, VertexKind::Exterior, 0.0}, {2, VertexKind::Exterior, 1.0},
                {3, VertexKind::Exterior, 0.0}, {4, VertexKind::Exterior, 1.0}};
  d.edges = {{1, 0.0, 1.0, 1, 2}, {2, 0.0, 1.0, 3, 4}};
  EXPECT_EQ(code_of([&] { build_graph(d); }), ErrorCode::DisconnectedGraph);
}

TEST(Graph, IntervalMismatchRejected) {
  GraphDescription d;
  d.vertices = {{1, VertexKind::Exterior, 0.0}, {2, VertexKind::Exterior, 1.0}};
  d.edges = {{1, 0.0, 1.5, 1, 2}};
  EXPECT_EQ(code_of([&] { build_graph(d); }), ErrorCode::InconsistentInterval);
  d.edges = {{1, 1.0, 0.0, 2, 1}};
  EXPECT_EQ(code_of([&] { build_graph(d); }), ErrorCode::InconsistentInterval);
}

TEST(Graph, UnboundedEdgeMustEndAtInfinity) {
  GraphDescription d;
  d.vertices = {{1, VertexKind::Exterior, 0.0}, {2, VertexKind::Exterior, 1.0}};
  d.edges = {{1, 0.0, kInfinity, 1, 2}};
  EXPECT_EQ(code_of([&] { build_graph(d); }), ErrorCode::InconsistentInterval);
}

TEST(Truncate, ThreeWellAddsBoundaryVertex) {
  auto g = three_well_graph();
  const double H0 = g.max_finite_vertex_value();
  auto t = truncate(g, H0 + 2.0);
  EXPECT_EQ(t.graph().num_vertices(), 6u);
  EXPECT_TRUE(t.graph().is_compact());
  const auto& clipped = t.graph().edges()[t.clipped_edge()];
  EXPECT_DOUBLE_EQ(clipped.a, H0);
  EXPECT_DOUBLE_EQ(clipped.b, H0 + 3.0);
  EXPECT_EQ(t.graph().vertex(t.boundary_vertex_id()).kind, VertexKind::TruncationBoundary);
  EXPECT_EQ(t.boundary_vertex_id(), 7);
}

TEST(Truncate, HalfLine) {
  auto t = truncate(half_line_graph(), 5.0);
  EXPECT_EQ(t.graph().num_vertices(), 2u);
  EXPECT_DOUBLE_EQ(t.graph().edges()[0].a, 0.0);
  EXPECT_DOUBLE_EQ(t.graph().edges()[0].b, 6.0);
}

TEST(Truncate, Errors) {
  EXPECT_EQ(code_of([] { truncate(interval_graph(), 5.0); }), ErrorCode::NoUnboundedEdge);
  EXPECT_EQ(code_of([] { truncate(three_well_graph(), 2.0); }), ErrorCode::RTooSmall);
  EXPECT_EQ(code_of([] { truncate(three_well_graph(), 1.0); }), ErrorCode::RTooSmall);
}

TEST(Truncate, StructureRepeatable) {
  auto g = three_well_graph();
  auto t1 = truncate(g, 4.0);
  auto t2 = truncate(g, 4.0);
  ASSERT_EQ(t1.graph().num_edges(), t2.graph().num_edges());
  for (std::size_t k = 0; k < t1.graph().num_edges(); ++k) {
    EXPECT_EQ(t1.graph().edges()[k].a, t2.graph().edges()[k].a);
    EXPECT_EQ(t1.graph().edges()[k].b, t2.graph().edges()[k].b);
    EXPECT_GT(t1.graph().edges()[k].length(), 0.0);
  }
}

TEST(Kirchhoff, SaddleSigns) {
  auto g = three_well_graph();
  // O4: edges 1, 2 arrive from below, edge 4 leaves upward
  auto st = kirchhoff_stencil(g, 4);
  ASSERT_EQ(st.size(), 3u);
  EXPECT_EQ(st[0], (StencilEntry{g.edge_index(1), -1}));
  EXPECT_EQ(st[1], (StencilEntry{g.edge_index(2), -1}));
  EXPECT_EQ(st[2], (StencilEntry{g.edge_index(4), +1}));
}

TEST(Kirchhoff, ExteriorEmptyBoundarySingle) {
  auto g = three_well_graph();
  EXPECT_TRUE(kirchhoff_stencil(g, 1).empty());
  auto t = truncate(g, 3.0);
  auto st = kirchhoff_stencil(t.graph(), t.boundary_vertex_id());
  ASSERT_EQ(st.size(), 1u);
  EXPECT_EQ(st[0].sign, -1);
}

TEST(Kirchhoff, ReversingEdgeFlipsSign) {
  // the same physical segment parameterized the other way round sees the
  // vertex at the opposite end
  GraphDescription d;
  d.relax_degree = true;
  d.vertices = {{1, VertexKind::Exterior, 0.0}, {2, VertexKind::Interior, 1.0},
                {3, VertexKind::Exterior, 2.0}};
  d.edges = {{1, 0.0, 1.0, 1, 2}, {2, 1.0, 2.0, 2, 3}};
  auto g = build_graph(d);
  EXPECT_EQ(incidence_sign(g, 0, 2), -1);
  EXPECT_EQ(incidence_sign(g, 1, 2), +1);
  EXPECT_EQ(incidence_sign(g, 0, 1), +1);
  EXPECT_EQ(incidence_sign(g, 1, 3), -1);
  int sum = 0;
  for (const auto& s : kirchhoff_stencil(g, 2)) sum += s.sign;
  EXPECT_EQ(sum, 0);
}

TEST(Graph, RandomTreesAcceptedIffRulesHold) {
  std::mt19937 rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    // random star-like chains: exterior leaves feeding interior nodes
    const int interior = 1 + static_cast<int>(rng() % 3);
    GraphDescription d;
    int next_id = 1;
    int edge_id = 1;
    std::vector<int> centres;
    for (int i = 0; i < interior; ++i) {
      centres.push_back(next_id);
      d.vertices.push_back({next_id++, VertexKind::Interior, 1.0 + i});
    }
    std::vector<int> degree(interior, 0);
    for (int i = 0; i + 1 < interior; ++i) {
      d.edges.push_back({edge_id++, 1.0 + i, 2.0 + i, centres[i], centres[i + 1]});
      ++degree[i];
      ++degree[i + 1];
    }
    for (int i = 0; i < interior; ++i) {
      const int leaves = static_cast<int>(rng() % 3);
      for (int l = 0; l < leaves; ++l) {
        d.vertices.push_back({next_id, VertexKind::Exterior, 0.5 + i - 1.0});
        d.edges.push_back({edge_id++, 0.5 + i - 1.0, 1.0 + i, next_id++, centres[i]});
        ++degree[i];
      }
    }
    // top of the chain goes to infinity
    d.vertices.push_back({next_id, VertexKind::Infinity, kInfinity});
    d.edges.push_back({edge_id++, static_cast<double>(interior), kInfinity, centres.back(),
                       next_id});
    ++degree.back();
    const bool expect_ok =
        std::all_of(degree.begin(), degree.end(), [](int deg) { return deg == 3; });
    bool ok = true;
    try {
      build_graph(d);
    } catch (const Error& e) {
      ok = false;
      EXPECT_EQ(e.code(), ErrorCode::BadDegree);
    }
    EXPECT_EQ(ok, expect_ok) << "trial " << trial;
  }
}

TEST(GraphIo, RoundTrip) {
  auto g = three_well_graph();
  std::stringstream ss;
  write_graph_description(ss, g, "fig1");
  auto file = parse_graph_description(ss);
  EXPECT_EQ(file.name, "fig1");
  auto h = build_graph(file.description);
  ASSERT_EQ(h.num_edges(), g.num_edges());
  for (std::size_t k = 0; k < g.num_edges(); ++k) {
    EXPECT_EQ(h.edges()[k].a, g.edges()[k].a);
    EXPECT_EQ(h.edges()[k].b, g.edges()[k].b);
    EXPECT_EQ(h.edges()[k].v_at_a, g.edges()[k].v_at_a);
  }
}

TEST(GraphIo, RejectsUnknownKey) {
  std::stringstream ss("colour = red\n[vertices]\n1 exterior 0\n");
  EXPECT_EQ(code_of([&] { parse_graph_description(ss); }), ErrorCode::ParseError);
  std::stringstream bad_kind("[vertices]\n1 hilltop 0\n");
  EXPECT_EQ(code_of([&] { parse_graph_description(bad_kind); }), ErrorCode::ParseError);
}

TEST(GraphIo, ReadsFigureOneFile) {
  std::ifstream in(std::string(GSPDE_SOURCE_DIR) + "/configs/fig1.graph");
  ASSERT_TRUE(in.good());
  auto g = read_graph(in);
  EXPECT_EQ(g.num_edges(), 5u);
  EXPECT_EQ(g.num_vertices(), 6u);
}
