// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>

#include "gspde/harness.hpp"

using namespace gspde;

namespace {

using Clock = std::chrono::steady_clock;

std::string config_path(const std::string& name) {
  return std::string(GSPDE_SOURCE_DIR) + "/configs/" + name;
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

int failures = 0;

void criterion(int id, const std::string& title, double budget_s,
               const std::function<Outcome()>& body) {
  const auto t0 = Clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  const bool in_time = secs <= budget_s;
  const bool pass = o.pass && in_time;
  if (!pass) ++failures;
  std::cout << "criterion " << id << ": " << (pass ? "PASS" : "FAIL") << "  " << title << "  ["
            << o.detail << "; " << num(secs) << " s of " << num(budget_s) << " s"
            << (in_time ? "" : ", over budget") << "]" << std::endl;
}

Outcome coefficient_oracle() {
  const auto spec = make_hamiltonian("harmonic");
  const auto reeb = build_reeb_graph(spec);
  double worst = 0.0;
  for (int i = 0; i <= 49; ++i) {
    const double z = 0.1 + (5.0 - 0.1) * i / 49.0;
    const auto ci = reduce_at(spec, reeb, 0, z);
    worst = std::max(worst, std::abs(ci.alpha / (4.0 * M_PI * z) - 1.0));
    worst = std::max(worst, std::abs(ci.beta / (2.0 * M_PI) - 1.0));
  }
  return {worst <= 1e-6, "max relative error " + num(worst) + " at 50 levels"};
}

Outcome saddle_log_blowup() {
  const auto spec = make_hamiltonian("double-well");
  const auto reeb = build_reeb_graph(spec);
  // an edge ending at a saddle from below
  std::optional<std::size_t> edge;
  double zs = 0.0;
  for (std::size_t k = 0; k < reeb.graph.num_edges() && !edge; ++k) {
    const int up = reeb.edges[k].upper_cp;
    if (up >= 0 && reeb.critical_points[static_cast<std::size_t>(up)].kind == CriticalKind::Saddle) {
      edge = k;
      zs = reeb.critical_points[static_cast<std::size_t>(up)].value;
    }
  }
  if (!edge) return {false, "no edge below a saddle"};
  std::vector<double> x, y;
  for (int i = 0; i <= 20; ++i) {
    const double d = std::pow(10.0, -3.0 + 2.0 * i / 20.0);
    x.push_back(std::abs(std::log(d)));
    y.push_back(reduce_at(spec, reeb, *edge, zs - d).beta);
  }
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  const double r2 = sxy * sxy / (sxx * syy);
  return {r2 >= 0.98 && sxy > 0.0, "R^2 " + num(r2) + ", slope " + num(sxy / sxx)};
}

Outcome conservation() {
  const auto ctx = build_context(load_config(config_path("validate.json")));
  const auto rep = run_validation_suite(ctx);
  const auto& c = rep.check("conservation");
  return {c.pass, "relative drift " + num(c.value) + " over 1000 steps"};
}

// L2 error against exp(-pi^2 t / 2) cos(pi z)
double heat_error(const FemSpace& s, const Vector& u, double t) {
  const auto& q = gauss8();
  double err = 0.0;
  for (std::size_t el = 0; el < s.elements(0); ++el) {
    const double z0 = s.node_z(0, el), h = s.h(0);
    for (std::size_t i = 0; i < q.x.size(); ++i) {
      const double z = z0 + 0.5 * h * (1 + q.x[i]);
      const double d = evaluate(s, u, 0, z) - std::exp(-M_PI * M_PI * t / 2) * std::cos(M_PI * z);
      err += 0.5 * h * q.w[i] * d * d;
    }
  }
  return std::sqrt(err);
}

Outcome heat_rate() {
  const auto g = interval_graph();
  const auto c = form_coefficients(
      CoefficientField::uniform(g, [](double) { return 1.0; }, [](double) { return 1.0; }),
      WeightFunction::unit());
  const auto noise = build_direct_noise(g, {[](std::size_t, double) { return 0.0; }}, 1.0);
  const GraphFunction u0 = [](std::size_t, double z) { return std::cos(M_PI * z); };
  std::vector<double> hs, errs;
  for (std::size_t n : {16u, 32u, 64u, 128u}) {
    const FemSpace s(g, {n});
    InstanceOptions opt;
    opt.T = 0.125;
    opt.dt = 1.0 / static_cast<double>(n * n);
    const auto p = make_instance(s, c, noise, u0, opt);
    hs.push_back(1.0 / static_cast<double>(n));
    errs.push_back(heat_error(s, integrate(p, nullptr, 1u << 30).final(), opt.T));
  }
  const auto f = fit_rate(hs, errs, std::vector<double>(hs.size(), 0.0));
  return {f.slope >= 1.9 && f.slope <= 2.1 && errs.back() <= 1e-4,
          "slope " + num(f.slope) + ", error at h=1/128 " + num(errs.back())};
}

std::string render(const ErrorReport& r) {
  std::ostringstream os;
  write_report_csv(os, r, false);
  write_summary_csv(os, r);
  return os.str();
}

std::string fem_csv, delta_csv, trunc_csv;

Outcome stochastic_rate() {
  const auto ctx = build_context(load_config(config_path("fem_rate.json")));
  const auto r = run_fem_rate(ctx);
  fem_csv = render(r);
  const bool ok = r.fit->slope >= 0.4 && r.fit->slope_stderr <= 0.1;
  return {ok, "slope " + num(r.fit->slope) + " +- " + num(r.fit->slope_stderr) + " on " +
                  std::to_string(r.fit->used.size()) + " levels, " +
                  std::to_string(r.levels.front().seeds) + " seeds"};
}

Outcome delta_sweep() {
  const auto ctx = build_context(load_config(config_path("delta_sweep.json")));
  const auto r = run_delta_sweep(ctx);
  delta_csv = render(r);
  return {r.pass, "monotone within CI " + num(r.metric("monotone_within_ci")) +
                      ", last/first " + num(r.metric("last_over_first"))};
}

Outcome truncation_sweep() {
  const auto ctx = build_context(load_config(config_path("trunc_sweep.json")));
  const auto r = run_truncation_sweep(ctx);
  trunc_csv = render(r);
  return {r.pass, "strictly decreasing " + num(r.metric("strictly_decreasing")) +
                      ", error^2/B band " + num(r.metric("band"))};
}

Outcome invariant_suite() {
  const auto ctx = build_context(load_config(config_path("validate.json")));
  const auto rep = run_validation_suite(ctx);
  std::string detail;
  bool ok = true;
  for (const char* name : {"coercivity", "kl_bound", "a_symmetry", "interpolation_inequality"}) {
    const auto& c = rep.check(name);
    ok &= c.pass && !c.skipped;
    detail += std::string(detail.empty() ? "" : ", ") + name + " " + (c.pass ? "ok" : "bad") +
              " (" + num(c.value) + ")";
  }
  return {ok, detail};
}

Outcome determinism() {
  bool ok = true;
  std::string detail;
  auto again = [&](const char* file, const std::string& first, std::size_t threads,
                   ErrorReport (*run)(const Context&)) {
    auto cfg = load_config(config_path(file));
    cfg.threads = threads;
    const bool same = !first.empty() && render(run(build_context(cfg))) == first;
    ok &= same;
    detail += std::string(detail.empty() ? "" : ", ") + file + (same ? " identical" : " differs");
  };
  again("fem_rate.json", fem_csv, 3, run_fem_rate);
  again("delta_sweep.json", delta_csv, 2, run_delta_sweep);
  again("trunc_sweep.json", trunc_csv, 4, run_truncation_sweep);
  return {ok, detail};
}

}  // namespace

int main() {
  criterion(1, "harmonic contour integrals", 10, coefficient_oracle);
  criterion(2, "saddle log blow-up of beta", 30, saddle_log_blowup);
  criterion(3, "mass conservation", 60, conservation);
  criterion(4, "deterministic FEM rate", 60, heat_rate);
  criterion(5, "stochastic FEM rate", 900, stochastic_rate);
  criterion(6, "regularization sweep", 600, delta_sweep);
  criterion(7, "truncation sweep", 600, truncation_sweep);
  criterion(8, "invariant suite", 60, invariant_suite);
  criterion(9, "byte-identical reruns", 1800, determinism);
  std::cout << (failures == 0 ? "all criteria pass" : std::to_string(failures) + " criteria fail")
            << std::endl;
  return failures == 0 ? 0 : 1;
}
