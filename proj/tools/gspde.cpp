// gspde: command-line driver for the graph SPDE experiments.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "gspde/harness.hpp"

namespace fs = std::filesystem;
using namespace gspde;

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::size_t> threads;
  bool record_timing = false;
};

ExperimentConfig load(const Options& o) {
  auto c = load_config(o.config);
  if (o.seed) c.seed = *o.seed;
  if (o.out) c.out = *o.out;
  if (o.threads) c.threads = *o.threads;
  c.record_timing = o.record_timing;
  return c;
}

std::ofstream open_out(const ExperimentConfig& c, const std::string& name) {
  fs::create_directories(c.out);
  const auto path = fs::path(c.out) / name;
  std::ofstream os(path);
  if (!os) throw Error(ErrorCode::InvalidConfig, "cannot write " + path.string());
  return os;
}

void print_report(const ErrorReport& r) {
  std::cout << r.experiment << " (" << r.param_name << ")\n";
  for (const auto& l : r.levels) {
    std::cout << "  " << r.param_name << " = " << l.param << "  error = " << l.error
              << "  stderr = " << l.stderr_ << "  seeds = " << l.seeds << '\n';
  }
  if (r.fit) std::cout << "  slope " << r.fit->slope << " +- " << r.fit->slope_stderr << '\n';
  for (const auto& [k, v] : r.metrics) std::cout << "  " << k << " = " << v << '\n';
  for (const auto& f : r.failures) std::cout << "  failed: " << f << '\n';
  std::cout << (r.pass ? "PASS" : "FAIL") << '\n';
}

int emit(const ExperimentConfig& c, const ErrorReport& r) {
  auto os = open_out(c, r.experiment + ".csv");
  write_report_csv(os, r, c.record_timing);
  auto ss = open_out(c, r.experiment + "_summary.csv");
  write_summary_csv(ss, r);
  print_report(r);
  return r.pass ? 0 : 1;
}

int cmd_validate(const Options& o) {
  const auto c = load(o);
  const auto rep = run_validation_suite(build_context(c));
  auto os = open_out(c, "validation.csv");
  write_validation_csv(os, rep);
  for (const auto& ch : rep.checks) {
    std::cout << (ch.skipped ? "SKIP" : ch.pass ? "PASS" : "FAIL") << "  " << ch.name << "  "
              << ch.detail << '\n';
  }
  return rep.pass() ? 0 : 1;
}

int cmd_build_graph(const Options& o) {
  const auto c = load(o);
  const auto ctx = build_context(c);
  {
    auto os = open_out(c, "graph.txt");
    write_graph_description(os, ctx.graph);
  }
  {
    auto os = open_out(c, "coefficients.csv");
    os << "edge,z,alpha,beta\n";
    for (std::size_t k = 0; k < ctx.graph.num_edges(); ++k) {
      const auto& e = ctx.graph.edges()[k];
      const double hi = e.bounded() ? e.b : e.a + c.noise.tail_span;
      for (std::size_t i = 1; i < 64; ++i) {
        const double z = e.a + (hi - e.a) * static_cast<double>(i) / 64.0;
        os << k << ',' << detail::fmt(z) << ',' << detail::fmt(ctx.field.alpha(k, z)) << ','
           << detail::fmt(ctx.field.beta(k, z)) << '\n';
      }
    }
  }
  {
    auto os = open_out(c, "noise_basis.csv");
    write_basis_csv(os, ctx.noise, ctx.graph);
  }
  write_graph_description(std::cout, ctx.graph);
  return 0;
}

int cmd_run(const Options& o) {
  const auto c = load(o);
  const auto ctx = build_context(c);
  const double R = c.R.empty() ? 0.0 : c.R.front();
  const double delta = c.delta.empty() ? 0.0 : c.delta.front();
  if (c.h.empty()) throw Error(ErrorCode::InvalidConfig, "run needs h");
  const auto d = discretize(ctx, R, delta);
  const auto space = build_space(d.compact, c.h.front());
  const double dt = time_step(c, c.h.front());
  const auto p = make_level(ctx, d, space, dt);
  std::optional<NoiseIncrementStream> s;
  if (p.stochastic()) s = detail::stream_for(ctx, c.seed, dt);
  const std::size_t every = std::max<std::size_t>(1, p.steps() / 100);
  auto tr = integrate(p, s ? &*s : nullptr, every);
  tr.seed = c.seed;
  {
    auto os = open_out(c, "trajectory.csv");
    write_trajectory_csv(os, tr);
  }
  {
    fs::create_directories(c.out);
    std::ofstream os(fs::path(c.out) / "trajectory.bin", std::ios::binary);
    write_trajectory_binary(os, tr);
  }
  const Vector& u = tr.final();
  std::cout << "dofs " << space.dim() << ", steps " << p.steps() << ", |u(T)|_M "
            << std::sqrt(u.dot(p.ops.M * u)) << '\n';
  return 0;
}

int cmd_dump(const Options& o) {
  const auto c = load(o);
  const auto ctx = build_context(c);
  const double R = c.R.empty() ? 0.0 : c.R.front();
  const double delta = c.delta.empty() ? 0.0 : c.delta.front();
  if (c.h.empty()) throw Error(ErrorCode::InvalidConfig, "dump-matrices needs h");
  const auto d = discretize(ctx, R, delta);
  const auto space = build_space(d.compact, c.h.front());
  const auto ops = assemble(space, d.coeffs);
  const std::pair<const char*, const SparseMatrix*> mats[] = {
      {"M_delta.mtx", &ops.M_delta}, {"M.mtx", &ops.M}, {"A.mtx", &ops.A}, {"S.mtx", &ops.S}};
  for (const auto& [name, m] : mats) {
    auto os = open_out(c, name);
    write_matrix_market(os, *m);
  }
  std::cout << "wrote 4 matrices of size " << space.dim() << " to " << c.out << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Finite element experiments for SPDEs on metric graphs"};
  app.require_subcommand(1);
  Options o;
  auto add = [&](const char* name, const char* help) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("config", o.config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "base seed");
    sub->add_option("--out", o.out, "output directory");
    sub->add_option("--threads", o.threads, "worker threads");
    sub->add_flag("--record-timing", o.record_timing, "write wall-clock seconds to the CSV");
    return sub;
  };
  auto* validate = add("validate", "run the invariant checks");
  auto* graph = add("build-graph", "write the graph, coefficients and noise basis");
  auto* run = add("run", "integrate one instance and write the trajectory");
  auto* fem = add("fem-rate", "mesh convergence rate");
  auto* dsw = add("delta-sweep", "regularization sweep");
  auto* tsw = add("trunc-sweep", "truncation sweep");
  auto* dump = add("dump-matrices", "write the assembled matrices");
  CLI11_PARSE(app, argc, argv);

  try {
    if (validate->parsed()) return cmd_validate(o);
    if (graph->parsed()) return cmd_build_graph(o);
    if (run->parsed()) return cmd_run(o);
    if (dump->parsed()) return cmd_dump(o);
    const auto c = load(o);
    const auto ctx = build_context(c);
    if (fem->parsed()) return emit(c, run_fem_rate(ctx));
    if (dsw->parsed()) return emit(c, run_delta_sweep(ctx));
    if (tsw->parsed()) return emit(c, run_truncation_sweep(ctx));
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
