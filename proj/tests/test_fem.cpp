#include <gtest/gtest.h>

#include <Eigen/IterativeLinearSolvers>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <random>
#include <sstream>

#include "gspde/fem.hpp"

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

FormCoefficients unit_coefficients(const MetricGraph& g) {
  return form_coefficients(
      CoefficientField::uniform(g, [](double) { return 1.0; }, [](double) { return 1.0; }),
      WeightFunction::unit());
}

Eigen::MatrixXd dense(const SparseMatrix& m) { return Eigen::MatrixXd(m); }

// truncated three-well graph with regularized analytic coefficients
struct RegularizedSetup {
  TruncatedGraph tg;
  CoefficientField fr;
  FormCoefficients coeffs;
  double kappa1;
};

RegularizedSetup regularized_setup(WeightFunction gamma, double delta = 0.05) {
  auto g = three_well_graph();
  auto tg = truncate(g, 3.0);
  auto fa = analytic_coefficients(g, default_profile(g));
  auto fr = truncate_alpha(fa, tg, make_cutoff(3.0, CutOffKind::Linear));
  auto pair = regularize(fr, tg, delta);
  auto kappa1 = validate_weight_compatibility(pair, gamma).kappa;
  return {tg, fr, form_coefficients(pair, gamma), kappa1};
}

}  // namespace

TEST(Space, Counting) {
  EXPECT_EQ(build_space(interval_graph(), 0.25).dim(), 5u);
  auto star = star_graph(3);
  EXPECT_EQ(FemSpace(star, {4, 4, 4}).dim(), 13u);
  auto tg = truncate(three_well_graph(), 3.0);
  // 5 edges with 7 interior nodes each plus 6 vertices
  EXPECT_EQ(FemSpace(tg.graph(), std::vector<std::size_t>(5, 8)).dim(), 41u);
}

TEST(Space, MeshTooCoarse) {
  EXPECT_EQ(code_of([] { build_space(interval_graph(), 1.0); }), ErrorCode::MeshTooCoarse);
  EXPECT_EQ(code_of([] { build_space(interval_graph(), 0.0); }), ErrorCode::MeshTooCoarse);
}

TEST(Space, DofOwnership) {
  auto tg = truncate(three_well_graph(), 3.0);
  auto s = build_space(tg, 0.1);
  std::vector<int> seen(s.dim(), 0);
  for (std::size_t k = 0; k < s.num_edges(); ++k) {
    for (std::size_t j = 1; j < s.elements(k); ++j) ++seen[s.node_dof(k, j)];
  }
  for (std::size_t v = 0; v < s.graph().num_vertices(); ++v) ++seen[s.vertex_dof(v)];
  for (int c : seen) EXPECT_EQ(c, 1);
  EXPECT_TRUE(s.refined().refines(s));
  EXPECT_FALSE(s.refines(s.refined()));
}

TEST(Assemble, UnitStiffnessAndMass) {
  auto g = interval_graph();
  auto s = FemSpace(g, {8});
  auto ops = assemble(s, unit_coefficients(g));
  const double h = 1.0 / 8;
  auto A = dense(ops.A);
  auto M = dense(ops.M_delta);
  for (std::size_t j = 2; j < 7; ++j) {
    const auto i = static_cast<Eigen::Index>(s.node_dof(0, j));
    const auto l = static_cast<Eigen::Index>(s.node_dof(0, j - 1));
    const auto r = static_cast<Eigen::Index>(s.node_dof(0, j + 1));
    EXPECT_NEAR(A(i, i), -1.0 / h, 1e-12);
    EXPECT_NEAR(A(i, l), 0.5 / h, 1e-12);
    EXPECT_NEAR(A(i, r), 0.5 / h, 1e-12);
    EXPECT_NEAR(M(i, i), 4.0 * h / 6.0, 1e-14);
    EXPECT_NEAR(M(i, l), h / 6.0, 1e-14);
  }
}

TEST(Assemble, SymmetricAndConservativeWhenGammaUnit) {
  auto setup = regularized_setup(WeightFunction::unit());
  auto s = build_space(setup.tg, 1.0 / 64);
  auto ops = assemble(s, setup.coeffs);
  const SparseMatrix diff = ops.A - SparseMatrix(ops.A.transpose());
  EXPECT_LE(max_abs(diff), 1e-12 * max_abs(ops.A));
  const Vector one = Vector::Ones(static_cast<Eigen::Index>(s.dim()));
  EXPECT_LE((ops.A * one).cwiseAbs().maxCoeff(), 1e-12 * max_abs(ops.A));
  EXPECT_LE((one.transpose() * ops.A).cwiseAbs().maxCoeff(), 1e-12 * max_abs(ops.A));
}

TEST(Assemble, SkewPartComesFromGammaDerivative) {
  auto setup = regularized_setup(WeightFunction::poly_decay(4, 2.0, 3.0));
  auto s = build_space(setup.tg, 1.0 / 32);
  auto ops = assemble(s, setup.coeffs);
  const SparseMatrix skew = ops.A - SparseMatrix(ops.A.transpose());
  EXPECT_GT(max_abs(skew), 1e-6);
  // only dofs on the clipped edge (where gamma' != 0) see asymmetry
  for (int col = 0; col < skew.outerSize(); ++col) {
    for (SparseMatrix::InnerIterator it(skew, col); it; ++it) {
      if (std::abs(it.value()) < 1e-14) continue;
      bool on_tail = false;
      for (std::size_t j = 0; j <= s.elements(4); ++j) {
        on_tail |= static_cast<Eigen::Index>(s.node_dof(4, j)) == it.row();
      }
      EXPECT_TRUE(on_tail);
    }
  }
}

TEST(Assemble, EntriesMatchAdaptiveQuadrature) {
  auto g = interval_graph(0.0, 1.0);
  auto f = CoefficientField::uniform(
      g, [](double z) { return 1.0 + z * z; }, [](double z) { return 2.0 + std::sin(3 * z); });
  auto gamma = WeightFunction::custom([](std::size_t, double z) { return std::exp(-z); },
                                      [](std::size_t, double z) { return -std::exp(-z); });
  auto c = form_coefficients(f, gamma);
  auto s = FemSpace(g, {2});
  auto ops = assemble(s, c);
  using GK = boost::math::quadrature::gauss_kronrod<double, 31>;
  auto hat = [&](std::size_t j, double z) {
    const double zj = 0.5 * j;
    return std::max(0.0, 1.0 - std::abs(z - zj) / 0.5);
  };
  auto dhat = [&](std::size_t j, double z) {
    const double zj = 0.5 * j;
    if (std::abs(z - zj) >= 0.5) return 0.0;
    return z < zj ? 2.0 : -2.0;
  };
  for (std::size_t i = 0; i <= 2; ++i) {
    for (std::size_t j = 0; j <= 2; ++j) {
      double m = 0, a = 0;
      for (auto [lo, hi] : {std::pair{0.0, 0.5}, std::pair{0.5, 1.0}}) {
        m += GK::integrate(
            [&](double z) { return (2.0 + std::sin(3 * z)) * std::exp(-z) * hat(i, z) * hat(j, z); },
            lo, hi, 15, 1e-14);
        a += GK::integrate(
            [&](double z) {
              return -0.5 * (1 + z * z) * dhat(j, z) *
                     (dhat(i, z) * std::exp(-z) - hat(i, z) * std::exp(-z));
            },
            lo, hi, 15, 1e-14);
      }
      const auto di = static_cast<Eigen::Index>(s.node_dof(0, i));
      const auto dj = static_cast<Eigen::Index>(s.node_dof(0, j));
      EXPECT_NEAR(ops.M_delta.coeff(di, dj), m, 1e-8 * std::max(1.0, std::abs(m)));
      EXPECT_NEAR(ops.A.coeff(di, dj), a, 1e-8 * std::max(1.0, std::abs(a)));
    }
  }
}

TEST(Assemble, SingularMassDetected) {
  auto g = interval_graph();
  auto f = CoefficientField::uniform(g, [](double) { return 1.0; }, [](double) { return -1.0; });
  auto s = FemSpace(g, {4});
  EXPECT_EQ(code_of([&] { assemble(s, form_coefficients(f, WeightFunction::unit())); }),
            ErrorCode::SingularMass);
}

TEST(Interpolate, AffineExact) {
  auto tg = truncate(three_well_graph(), 3.0);
  auto s = build_space(tg, 0.1);
  GraphFunction f = [](std::size_t, double z) { return 2.0 * z - 1.0; };
  auto u = interpolate(s, f);
  for (std::size_t k = 0; k < s.num_edges(); ++k) {
    const auto& e = s.graph().edges()[k];
    for (int i = 0; i <= 37; ++i) {
      const double z = e.a + (e.b - e.a) * i / 37.0;
      EXPECT_NEAR(evaluate(s, u, k, z), f(k, z), 1e-12);
    }
  }
}

TEST(Interpolate, SecondOrderInL2) {
  auto g = interval_graph();
  auto c = unit_coefficients(g);
  GraphFunction f = [](std::size_t, double z) { return std::cos(M_PI * z); };
  auto error = [&](std::size_t n) {
    auto s = FemSpace(g, {n});
    auto u = interpolate(s, f);
    // int (f - I f)^2 by 8-point Gauss per element of a 16x finer mesh
    const auto& q = gauss8();
    double err = 0.0;
    const std::size_t m = 16 * n;
    for (std::size_t el = 0; el < m; ++el) {
      const double z0 = static_cast<double>(el) / m, h = 1.0 / m;
      for (std::size_t i = 0; i < q.x.size(); ++i) {
        const double z = z0 + 0.5 * h * (1 + q.x[i]);
        const double d = f(0, z) - evaluate(s, u, 0, z);
        err += 0.5 * h * q.w[i] * d * d;
      }
    }
    return std::sqrt(err);
  };
  (void)c;
  const double r1 = error(16) / error(32);
  const double r2 = error(32) / error(64);
  EXPECT_NEAR(r1, 4.0, 0.1);
  EXPECT_NEAR(r2, 4.0, 0.05);
}

TEST(Interpolate, DiscontinuityRejected) {
  auto g = three_well_graph();
  auto tg = truncate(g, 3.0);
  auto s = build_space(tg, 0.1);
  GraphFunction f = [](std::size_t k, double z) { return z + (k == 3 ? 1.0 : 0.0); };
  EXPECT_EQ(code_of([&] { interpolate(s, f); }), ErrorCode::PreconditionViolated);
}

TEST(L2Project, IdempotentConstantsOrthogonal) {
  auto setup = regularized_setup(WeightFunction::poly_decay(4, 2.0, 3.0));
  auto s = build_space(setup.tg, 1.0 / 32);
  auto ops = assemble(s, setup.coeffs);
  const auto n = static_cast<Eigen::Index>(s.dim());
  std::mt19937 rng(3);
  std::normal_distribution<double> nd;
  Vector v(n);
  for (auto i = 0; i < n; ++i) v[i] = nd(rng);
  Vector pv = l2_project(ops, ops.M_delta * v);
  EXPECT_LE((pv - v).cwiseAbs().maxCoeff(), 1e-10);
  Vector one = l2_project(s, ops, setup.coeffs, [](std::size_t, double) { return 1.0; });
  EXPECT_LE((one - Vector::Ones(n)).cwiseAbs().maxCoeff(), 1e-10);
  GraphFunction f = [](std::size_t k, double z) { return std::sin(5 * z) + 0.1 * k; };
  const auto& gm = setup.coeffs.gamma;
  const auto& bd = setup.coeffs.beta_delta;
  GraphFunction w = [&](std::size_t k, double z) { return bd(k, z) * gm(k, z); };
  Vector rhs = load_vector(s, f, w);
  Vector pf = l2_project(ops, rhs);
  // <f - P f, phi_i> = rhs - M P f
  EXPECT_LE((rhs - ops.M_delta * pf).cwiseAbs().maxCoeff(), 1e-10 * rhs.cwiseAbs().maxCoeff());
}

TEST(Ritz, ReproducesSpaceFunctions) {
  auto setup = regularized_setup(WeightFunction::poly_decay(4, 2.0, 3.0));
  auto s = build_space(setup.tg, 1.0 / 16);
  auto ops = assemble(s, setup.coeffs);
  GraphFunction f = [](std::size_t, double z) { return z * z; };
  Vector u = interpolate(s, f);
  // f_h and its piecewise constant derivative
  GraphFunction fh = [&](std::size_t k, double z) { return evaluate(s, u, k, z); };
  GraphFunction dfh = [&](std::size_t k, double z) {
    const double h = s.h(k);
    const auto& e = s.graph().edges()[k];
    auto el = static_cast<std::size_t>(
        std::clamp(std::floor((z - e.a) / h), 0.0, static_cast<double>(s.elements(k) - 1)));
    return (u[static_cast<Eigen::Index>(s.node_dof(k, el + 1))] -
            u[static_cast<Eigen::Index>(s.node_dof(k, el))]) /
           h;
  };
  const double lambda = std::max(setup.kappa1, 1e-3) / 8.0 * 2.0;
  Vector r = ritz_project(s, ops, setup.coeffs, fh, dfh, lambda, setup.kappa1);
  EXPECT_LE((r - u).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Ritz, EnergyErrorFirstOrder) {
  auto g = interval_graph();
  auto c = unit_coefficients(g);
  GraphFunction f = [](std::size_t, double z) { return std::cos(M_PI * z); };
  GraphFunction df = [](std::size_t, double z) { return -M_PI * std::sin(M_PI * z); };
  auto energy_error = [&](std::size_t n) {
    auto s = FemSpace(g, {n});
    auto ops = assemble(s, c);
    Vector r = ritz_project(s, ops, c, f, df, 1.0);
    const auto& q = gauss8();
    double err = 0.0;
    for (std::size_t el = 0; el < n; ++el) {
      const double h = s.h(0), z0 = s.node_z(0, el);
      const double slope = (r[static_cast<Eigen::Index>(s.node_dof(0, el + 1))] -
                            r[static_cast<Eigen::Index>(s.node_dof(0, el))]) /
                           h;
      for (std::size_t i = 0; i < q.x.size(); ++i) {
        const double z = z0 + 0.5 * h * (1 + q.x[i]);
        const double d = df(0, z) - slope;
        const double v = f(0, z) - evaluate(s, r, 0, z);
        err += 0.5 * h * q.w[i] * (d * d + v * v);
      }
    }
    return std::sqrt(err);
  };
  const double e1 = energy_error(16), e2 = energy_error(32), e3 = energy_error(64);
  EXPECT_NEAR(e1 / e2, 2.0, 0.1);
  EXPECT_NEAR(e2 / e3, 2.0, 0.1);
}

TEST(Ritz, ZeroShiftRejected) {
  auto g = interval_graph();
  auto c = unit_coefficients(g);
  auto s = FemSpace(g, {8});
  auto ops = assemble(s, c);
  GraphFunction f = [](std::size_t, double) { return 1.0; };
  GraphFunction df = [](std::size_t, double) { return 0.0; };
  EXPECT_EQ(code_of([&] { ritz_project(s, ops, c, f, df, 0.0); }), ErrorCode::NonCoerciveShift);
  EXPECT_EQ(code_of([&] { ritz_project(s, ops, c, f, df, 0.1, 8.0); }),
            ErrorCode::NonCoerciveShift);
}

TEST(Shifted, LargeShiftNeumann) {
  auto setup = regularized_setup(WeightFunction::poly_decay(4, 2.0, 3.0));
  auto s = build_space(setup.tg, 1.0 / 16);
  auto ops = assemble(s, setup.coeffs);
  const auto n = static_cast<Eigen::Index>(s.dim());
  Vector v = Vector::LinSpaced(n, -1.0, 2.0);
  const double y = 1e8;
  Vector x = solve_shifted(ops, y, ops.M_delta * v);
  // x = (yM - A)^-1 M v = v/y + O(1/y^2)
  const double C = 10.0 * max_abs(ops.A) / (max_abs(ops.M_delta));
  EXPECT_LE((x * y - v).norm() / v.norm(), C / y);
}

TEST(Shifted, OneByOneToy) {
  SparseMatrix M(1, 1), A(1, 1);
  M.insert(0, 0) = 2.0;
  A.insert(0, 0) = -1.0;
  ShiftedSolver solver(M, A);
  Vector rhs(1);
  rhs << 10.0;
  EXPECT_DOUBLE_EQ(solver.solve(2.0, rhs)[0], 2.0);
}

TEST(Shifted, MatchesConjugateGradient) {
  auto setup = regularized_setup(WeightFunction::unit());
  auto s = build_space(setup.tg, 1.0 / 32);
  auto ops = assemble(s, setup.coeffs);
  const auto n = static_cast<Eigen::Index>(s.dim());
  Vector rhs = Vector::LinSpaced(n, 0.0, 1.0).array().sin();
  const double y = 0.7;
  ShiftedSolver solver(ops);
  Vector x = solver.solve(y, rhs);
  EXPECT_LE(solver.residual(y, x, rhs), 1e-12);
  SparseMatrix m = y * ops.M_delta - ops.A;
  Eigen::ConjugateGradient<SparseMatrix, Eigen::Lower | Eigen::Upper> cg;
  cg.setTolerance(1e-14);
  cg.setMaxIterations(100000);
  cg.compute(m);
  Vector xc = cg.solve(rhs);
  EXPECT_LE((x - xc).norm() / xc.norm(), 1e-10);
}

TEST(Invariants, Coercivity) {
  auto setup = regularized_setup(WeightFunction::poly_decay(4, 2.0, 3.0));
  auto s = build_space(setup.tg, 1.0 / 32);
  auto ops = assemble(s, setup.coeffs);
  const double eps = 1e-3;
  const double lambda = std::max(setup.kappa1, eps) / 8.0 * (1.0 + eps);
  const auto n = static_cast<Eigen::Index>(s.dim());
  std::mt19937 rng(11);
  std::normal_distribution<double> nd;
  int violations = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    Vector v(n);
    for (auto i = 0; i < n; ++i) v[i] = nd(rng);
    const double q = lambda * v.dot(ops.M_delta * v) - v.dot(ops.A * v);
    violations += q < 0.0;
  }
  EXPECT_EQ(violations, 0);
}

TEST(Invariants, InterpolationInequalityConstantStable) {
  auto setup = regularized_setup(WeightFunction::poly_decay(4, 2.0, 3.0));
  auto constant = [&](double h) {
    auto s = build_space(setup.tg, h);
    auto ops = assemble(s, setup.coeffs);
    std::mt19937 rng(5);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    double c = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
      const double a1 = u(rng), a2 = u(rng), a3 = u(rng), f1 = 1 + 3 * std::abs(u(rng));
      GraphFunction f = [=](std::size_t, double z) {
        return a1 + a2 * std::cos(f1 * z) + a3 * std::sin(2 * f1 * z);
      };
      Vector v = interpolate(s, f);
      const double m = v.dot(ops.M * v);
      const double md = std::sqrt(v.dot(ops.M_delta * v));
      const double sv = std::sqrt(v.dot(ops.S * v));
      c = std::max(c, m / (md * sv));
    }
    return c;
  };
  const double c1 = constant(1.0 / 32), c2 = constant(1.0 / 64);
  EXPECT_LE(std::max(c1, c2) / std::min(c1, c2), 1.5);
}

TEST(MatrixMarket, Format) {
  auto g = interval_graph();
  auto s = FemSpace(g, {2});
  auto ops = assemble(s, unit_coefficients(g));
  std::stringstream ss;
  write_matrix_market(ss, ops.M_delta);
  std::string line;
  std::getline(ss, line);
  EXPECT_EQ(line, "%%MatrixMarket matrix coordinate real general");
  int r, c, nnz;
  ss >> r >> c >> nnz;
  EXPECT_EQ(r, 3);
  EXPECT_EQ(c, 3);
  EXPECT_EQ(nnz, 7);
  int i, j;
  double v;
  int count = 0;
  while (ss >> i >> j >> v) {
    EXPECT_GE(i, 1);
    EXPECT_LE(j, 3);
    ++count;
  }
  EXPECT_EQ(count, nnz);
}
