#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "gspde/harness.hpp"

using namespace gspde;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no exception";
  return ErrorCode::PreconditionViolated;
}

Json three_well_json() {
  return Json::parse(R"J({
    "experiment": "validate",
    "graph": {"source": "three-well"},
    "coefficients": "analytic",
    "gamma": {"family": "poly_decay", "rho3": 3},
    "R": [3], "delta": [0.05], "h": [0.03125],
    "noise": {"mode": "direct", "basis": ["0.5", "0.5*cos(z)"], "bound": 1},
    "u0": "exp(-z)", "T": 0.1, "seeds": 4, "seed": 7, "coercivity_vectors": 200
  })J");
}

Json interval_json() {
  return Json::parse(R"J({
    "experiment": "fem-rate",
    "graph": {"source": "interval", "interval": [0, 1]},
    "coefficients": {"source": "uniform", "alpha": 1, "beta": 1},
    "h": [0.25, 0.125, 0.0625], "h_ref": 0.015625, "dt": "h",
    "noise": {"mode": "direct", "basis": ["0.5"], "bound": 1},
    "b": "linear:-1", "g": "linear:0.5", "u0": "cos(3.14159265358979*z)",
    "T": 0.25, "seeds": 4, "seed": 3, "threads": 2
  })J");
}

}  // namespace

TEST(FitRate, ExactPowerLawGivesExactSlope) {
  const std::vector<double> h = {0.5, 0.25, 0.125, 0.0625};
  std::vector<double> e, s(4, 0.0);
  for (double x : h) e.push_back(3.0 * x);
  const auto f = fit_rate(h, e, s);
  EXPECT_NEAR(f.slope, 1.0, 1e-12);
  EXPECT_NEAR(f.slope_stderr, 0.0, 1e-12);
}

TEST(FitRate, NoisySecondOrderData) {
  const std::vector<double> h = {0.5, 0.25, 0.125, 0.0625, 0.03125};
  const std::vector<double> jitter = {0.01, -0.01, 0.008, -0.006, 0.01};
  std::vector<double> e, s;
  for (std::size_t i = 0; i < h.size(); ++i) {
    e.push_back(h[i] * h[i] * (1.0 + jitter[i]));
    s.push_back(0.01 * e.back());
  }
  const auto f = fit_rate(h, e, s);
  EXPECT_NEAR(f.slope, 2.0, 0.05);
  EXPECT_LT(f.slope_stderr, 0.05);
}

TEST(FitRate, TwoLevelsAreRejected) {
  EXPECT_EQ(code_of([] { fit_rate({0.5, 0.25}, {1.0, 0.5}, {0.0, 0.0}); }),
            ErrorCode::InsufficientLevels);
}

TEST(FitRate, NoisyLevelsAreDropped) {
  std::vector<LevelResult> lv(4);
  const double h[] = {0.5, 0.25, 0.125, 0.0625};
  for (std::size_t i = 0; i < 4; ++i) {
    lv[i].param = h[i];
    lv[i].error = h[i];
    lv[i].stderr_ = 1e-4;
  }
  lv[3].stderr_ = 0.5;
  const auto f = fit_levels(lv);
  EXPECT_EQ(f.used.size(), 3u);
  EXPECT_NEAR(f.slope, 1.0, 1e-6);
  lv[2].stderr_ = 0.5;
  EXPECT_EQ(code_of([&] { fit_levels(lv); }), ErrorCode::InsufficientLevels);
}

TEST(Config, ParsesAndValidates) {
  const auto c = parse_config(three_well_json());
  EXPECT_EQ(c.graph_source, "three-well");
  EXPECT_EQ(c.noise.basis.size(), 2u);
  EXPECT_DOUBLE_EQ(c.gamma.rho3, 3.0);
  EXPECT_EQ(c.seed, 7u);
}

TEST(Config, RejectsBadLists) {
  auto j = three_well_json();
  j["h"] = {0.1, 0.2};
  EXPECT_EQ(code_of([&] { parse_config(j); }), ErrorCode::InvalidConfig);
  j = three_well_json();
  j["h"] = {0.1, 0.03};
  EXPECT_EQ(code_of([&] { parse_config(j); }), ErrorCode::InvalidConfig);
  j = three_well_json();
  j["delta"] = {0.01, 0.02};
  EXPECT_EQ(code_of([&] { parse_config(j); }), ErrorCode::InvalidConfig);
  j = three_well_json();
  j["R"] = {4, 2};
  EXPECT_EQ(code_of([&] { parse_config(j); }), ErrorCode::InvalidConfig);
  j = three_well_json();
  j["b"] = "cubic";
  EXPECT_EQ(code_of([&] { parse_config(j); }), ErrorCode::InvalidConfig);
  j = three_well_json();
  j["dt"] = "fast";
  EXPECT_EQ(code_of([&] { parse_config(j); }), ErrorCode::InvalidConfig);
  j = three_well_json();
  j["noise"]["mode"] = "spectral";
  EXPECT_EQ(code_of([&] { parse_config(j); }), ErrorCode::InvalidConfig);
  j = three_well_json();
  j["T"] = "long";
  EXPECT_EQ(code_of([&] { parse_config(j); }), ErrorCode::InvalidConfig);
}

TEST(Config, TimeStepRule) {
  ExperimentConfig c;
  EXPECT_DOUBLE_EQ(time_step(c, 0.25), 0.25);
  c.dt = "h2";
  EXPECT_DOUBLE_EQ(time_step(c, 0.25), 0.0625);
  c.dt = "0.01";
  EXPECT_DOUBLE_EQ(time_step(c, 0.25), 0.01);
}

TEST(Context, DeltaAboveMinimumIsRejected) {
  auto j = three_well_json();
  j["delta"] = {0.5};
  const auto ctx = build_context(parse_config(j));
  EXPECT_EQ(code_of([&] { discretize(ctx, 3.0, 0.5); }), ErrorCode::DeltaTooLarge);
}

TEST(Context, SpectralNoiseOnHarmonicGraph) {
  const auto j = Json::parse(R"J({
    "graph": {"source": "hamiltonian", "name": "harmonic"},
    "noise": {"mode": "spectral", "tail_span": 12,
              "atoms": [{"xi": [0, 0], "w": 0.5}, {"xi": [1, 0], "w": 0.25},
                        {"xi": [-1, 0], "w": 0.25}]}
  })J");
  const auto ctx = build_context(parse_config(j));
  EXPECT_EQ(ctx.noise.J(), 3u);
  EXPECT_FALSE(ctx.graph.is_compact());
}

TEST(Truncation, FatWeightIsRejected) {
  auto j = Json::parse(R"J({
    "graph": {"source": "hamiltonian", "name": "harmonic"},
    "gamma": {"family": "poly_decay", "rho3": 1.5},
    "R": [2, 4], "h": [0.25], "T": 0.1
  })J");
  auto ctx = build_context(parse_config(j));
  EXPECT_EQ(code_of([&] { run_truncation_sweep(ctx); }), ErrorCode::GammaTooFat);
  ctx.cfg.gamma.rho3 = 3.0;
  EXPECT_NO_THROW(require_decaying_proxy(ctx));
  EXPECT_GT(truncation_bound_proxy(ctx, 2.0), truncation_bound_proxy(ctx, 8.0));
}

TEST(Truncation, ErrorDecreasesWithR) {
  auto j = Json::parse(R"J({
    "graph": {"source": "hamiltonian", "name": "harmonic"},
    "gamma": {"family": "poly_decay", "rho3": 3},
    "R": [2, 4, 8], "h": [0.25], "dt": "h", "T": 0.5,
    "noise": {"mode": "direct", "basis": ["0"], "bound": 1},
    "b": "linear:-1", "u0": "log(1+z)"
  })J");
  const auto ctx = build_context(parse_config(j));
  const auto r = run_truncation_sweep(ctx);
  ASSERT_EQ(r.levels.size(), 2u);
  EXPECT_GT(r.levels[0].error, r.levels[1].error);
  EXPECT_GT(r.levels[1].error, 0.0);
}

TEST(FemRate, TooFewLevels) {
  auto j = interval_json();
  j["h"] = {0.25, 0.125};
  const auto ctx = build_context(parse_config(j));
  EXPECT_EQ(code_of([&] { run_fem_rate(ctx); }), ErrorCode::InsufficientLevels);
}

TEST(FemRate, DeterministicHeatRate) {
  auto j = interval_json();
  j["noise"]["basis"] = {"0"};
  j["b"] = "zero";
  j["g"] = "zero";
  j["dt"] = "h2";
  j["h_ref"] = 0.03125;
  const auto ctx = build_context(parse_config(j));
  const auto r = run_fem_rate(ctx);
  ASSERT_TRUE(r.fit);
  EXPECT_EQ(r.levels.front().seeds, 1u);
  EXPECT_GT(r.fit->slope, 1.8);
}

TEST(FemRate, CsvIsDeterministic) {
  const auto ctx = build_context(parse_config(interval_json()));
  auto render = [&] {
    const auto r = run_fem_rate(ctx);
    std::ostringstream a, b;
    write_report_csv(a, r, false);
    write_summary_csv(b, r);
    return a.str() + b.str();
  };
  const std::string first = render();
  EXPECT_EQ(first, render());
  EXPECT_NE(first.find("fem-rate,0,2.5000000000e-01"), std::string::npos);
  EXPECT_NE(first.find(",NA\n"), std::string::npos);
}

TEST(DeltaSweep, DifferencesShrink) {
  auto j = three_well_json();
  j["delta"] = {0.125, 0.0625, 0.03125};
  j["h"] = {0.015625};
  j["dt"] = "0.01";
  const auto ctx = build_context(parse_config(j));
  const auto r = run_delta_sweep(ctx);
  ASSERT_EQ(r.levels.size(), 2u);
  EXPECT_LT(r.levels[1].error, r.levels[0].error);
}

TEST(Validation, PassesOnThreeWell) {
  const auto ctx = build_context(parse_config(three_well_json()));
  const auto rep = run_validation_suite(ctx);
  for (const auto& c : rep.checks) {
    EXPECT_TRUE(c.pass) << c.name << ": " << c.detail;
  }
  EXPECT_TRUE(rep.pass());
  EXPECT_TRUE(rep.check("a_symmetry").skipped);
}

TEST(Validation, InjectedRegularizerFailsOneCheck) {
  auto j = three_well_json();
  j["inject_bad_regularizer"] = true;
  const auto ctx = build_context(parse_config(j));
  const auto rep = run_validation_suite(ctx);
  EXPECT_FALSE(rep.pass());
  for (const auto& c : rep.checks) {
    EXPECT_EQ(c.pass, c.name != "regularization") << c.name << ": " << c.detail;
  }
}

TEST(Validation, SymmetryWithUnitWeight) {
  auto j = three_well_json();
  j["gamma"] = {{"family", "unit"}};
  const auto ctx = build_context(parse_config(j));
  const auto rep = run_validation_suite(ctx);
  const auto& c = rep.check("a_symmetry");
  EXPECT_FALSE(c.skipped);
  EXPECT_TRUE(c.pass) << c.value;
  std::ostringstream os;
  write_validation_csv(os, rep);
  EXPECT_NE(os.str().find("a_symmetry,1,0,"), std::string::npos);
}
