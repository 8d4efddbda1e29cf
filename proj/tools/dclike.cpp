// Command-line front end: single runs, multi-seed benchmark campaigns, and a
// built-in self-check suite on synthetic instances.

#include <cstdio>
#include <iostream>

#include "CLI11.hpp"
#include "dclike/dclike.hpp"

namespace {

using namespace dclike;

std::vector<Variant> parse_variants(const std::vector<std::string>& names) {
  std::vector<Variant> out;
  for (const auto& name : names) {
    if (name == "all") {
      out = {Variant::dca, Variant::dca_like, Variant::adca_like};
      return out;
    }
    out.push_back(variant_from_string(name));
  }
  return out;
}

void add_spec_options(CLI::App* cmd, RunSpec& spec, std::vector<std::string>& variant_names,
                      bool* serial) {
  cmd->add_option("--input", spec.input, "Input CSV/TSV numeric matrix (one row per point)")
      ->required();
  cmd->add_option("--variant", variant_names,
                  "Solver variant(s): dca | dca-like | adca-like | all")
      ->delimiter(',');
  cmd->add_option("--k", spec.k, "kNN neighbor count for the affinity graph")
      ->capture_default_str();
  cmd->add_option("--dims", spec.dims, "Embedding dimension")->capture_default_str();
  cmd->add_option("--mu0", spec.mu0, "Initial convexity parameter")->capture_default_str();
  cmd->add_option("--eta", spec.eta, "Backtracking growth factor (> 1)")->capture_default_str();
  cmd->add_option("--delta", spec.delta, "Per-iteration mu decay factor in (0,1)")
      ->capture_default_str();
  cmd->add_option("--max-iter", spec.max_iter, "Iteration cap")->capture_default_str();
  cmd->add_option("--rel-tol", spec.rel_tol, "Relative-step stopping threshold")
      ->capture_default_str();
  cmd->add_option("--exaggeration", spec.exaggeration, "Early exaggeration factor")
      ->capture_default_str();
  cmd->add_option("--exaggeration-iters", spec.exaggeration_iters,
                  "Number of exaggerated iterations")
      ->capture_default_str();
  cmd->add_option("--seeds", spec.seeds, "Seed list (comma separated)")->delimiter(',');
  cmd->add_option("--out", spec.out_dir, "Output directory")->capture_default_str();
  if (serial)
    cmd->add_flag("--serial", *serial, "Run (variant, seed) jobs sequentially for clean timing");
}

int cmd_run(RunSpec spec) {
  if (spec.variants.size() != 1) {
    std::cerr << "run: exactly one --variant is required\n";
    return 1;
  }
  if (spec.seeds.size() != 1) {
    std::cerr << "run: exactly one seed is required (use bench for campaigns)\n";
    return 1;
  }
  try {
    const RunResult r = run_once(spec, spec.seeds.front());
    const double objective = r.solver.trace.empty() ? r.solver.initial_objective
                                                    : r.solver.trace.back().objective;
    std::printf("%s seed %llu: %zu iterations (%s), objective %.6f\n",
                to_string(spec.variants.front()),
                static_cast<unsigned long long>(spec.seeds.front()), r.solver.iterations,
                to_string(r.solver.reason), objective);
    std::printf("solver %.3f s, pipeline %.3f s\n", r.solver_sec, r.pipeline_sec);
    std::printf("embedding: %s\ntrace:     %s\n", r.embedding_path.c_str(),
                r.trace_path.c_str());
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "run failed: " << e.what() << "\n";
    return 1;
  }
}

int cmd_bench(const RunSpec& spec) {
  try {
    const BenchReport report = bench(spec);
    std::cout << report.text_table();
    std::cout << "report: " << report.report_csv_path << "\n";
    return report.all_ok() ? 0 : 1;
  } catch (const std::exception& e) {
    std::cerr << "bench failed: " << e.what() << "\n";
    return 1;
  }
}

// ---- self checks ----------------------------------------------------------

struct CheckContext {
  int failures = 0;

  void record(const std::string& name, bool ok, const std::string& detail = "") {
    std::printf("[%s] %s%s%s\n", ok ? "PASS" : "FAIL", name.c_str(), detail.empty() ? "" : ": ",
                detail.c_str());
    if (!ok) ++failures;
  }

  template <typename Fn>
  void run(const std::string& name, Fn&& fn) {
    try {
      auto [ok, detail] = fn();
      record(name, ok, detail);
    } catch (const std::exception& e) {
      record(name, false, std::string("exception: ") + e.what());
    }
  }
};

using CheckOutcome = std::pair<bool, std::string>;

tsne::TsneProblem make_problem(std::size_t n, std::size_t d, std::size_t k, std::uint64_t seed) {
  const Matrix data = make_clusters(n, d, 4, 1.0, seed);
  return tsne::TsneProblem(tsne::build_knn_affinities(knn_graph(data, k), n), 2);
}

CheckOutcome check_gradient_fd() {
  detail::GaussianSampler g(11);
  double worst = 0.0;
  for (int rep = 0; rep < 5; ++rep) {
    auto problem = make_problem(8, 3, 3, 100 + rep);
    Embedding x(8, 2);
    for (std::size_t idx = 0; idx < x.size(); ++idx) x.data()[idx] = g.next();
    const Embedding grad = problem.smooth_grad(x);
    const double h = 1e-5;
    Embedding fd(8, 2);
    for (std::size_t idx = 0; idx < x.size(); ++idx) {
      Embedding xp = x, xm = x;
      xp.data()[idx] += h;
      xm.data()[idx] -= h;
      fd.data()[idx] = (problem.smooth_value(xp) - problem.smooth_value(xm)) / (2.0 * h);
    }
    worst = std::max(worst, frob_dist(grad, fd) / frob_norm(fd));
  }
  char buf[64];
  std::snprintf(buf, sizeof buf, "max rel err %.2e", worst);
  return {worst <= 1e-5, buf};
}

CheckOutcome check_laplacian() {
  const SparseCoo a(2, {{0, 1, 1.0}, {1, 0, 1.0}});
  const LaplacianOp l = laplacian(a);
  const double x[2] = {1.0, -1.0};
  double y[2];
  l.apply(x, y);
  const bool example_ok = y[0] == 2.0 && y[1] == -2.0;  // [[1,-1],[-1,1]] [1,-1]

  detail::GaussianSampler g(5);
  std::vector<Triplet> tr;
  const std::size_t n = 40;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; j += 3) {
      const double w = std::abs(g.next());
      tr.push_back({i, j, w});
      tr.push_back({j, i, w});
    }
  const SparseCoo w(n, tr);
  const LaplacianOp lw = laplacian(w);
  std::vector<double> ones(n, 1.0), out(n);
  lw.apply(ones.data(), out.data());
  double worst = 0.0;
  for (double v : out) worst = std::max(worst, std::abs(v));
  char buf[64];
  std::snprintf(buf, sizeof buf, "max |L 1| = %.2e", worst);
  return {example_ok && worst <= 1e-12, buf};
}

CheckOutcome check_cg() {
  const SparseCoo zero(6, {});
  const LaplacianOp l = laplacian(zero);
  const ShiftedLaplacian op(l, 2.0);
  Matrix b(6, 1);
  for (std::size_t i = 0; i < 6; ++i) b(i, 0) = static_cast<double>(i) - 2.5;
  const Matrix x = cg_solve(op, b);
  double worst = 0.0;
  for (std::size_t i = 0; i < 6; ++i) worst = std::max(worst, std::abs(x(i, 0) - b(i, 0) / 2.0));
  return {worst == 0.0, "identity-shift solve exact"};
}

CheckOutcome check_affinities() {
  for (int rep = 0; rep < 10; ++rep) {
    const std::size_t n = 20 + 7 * rep;
    const Matrix data = make_clusters(n, 4, 3, 1.0, 40 + rep);
    const auto p = tsne::build_knn_affinities(knn_graph(data, 5), n);
    if (std::abs(p.total_mass() - 1.0) > 1e-12) return {false, "mass off"};
    for (const auto& e : p.entries())
      if (e.i == e.j || e.p < 0.0) return {false, "bad entry"};
  }
  return {true, "symmetric, unit mass"};
}

CheckOutcome check_nesterov() {
  double t = 1.0;
  for (std::size_t k = 0; k < 1000; ++k) {
    if (!(t >= (static_cast<double>(k) + 2.0) / 2.0)) return {false, "growth bound violated"};
    const double next = nesterov_t_next(t);
    if (!(next > t)) return {false, "not increasing"};
    t = next;
  }
  return {true, "t_k >= (k+2)/2 for k <= 1000"};
}

CheckOutcome check_mm_equivalence() {
  auto problem = make_problem(15, 3, 4, 3);
  const Embedding v = init_embedding(15, 2, 9);
  const bool ok = tsne::mm_equivalence_check(v, problem.affinities(), 0.5);
  return {ok, "surrogate gradient below 1e-8 at the subproblem solution"};
}

CheckOutcome check_drivers() {
  const std::size_t n = 40;
  auto base = make_problem(n, 4, 5, 21);
  const Embedding x0 = init_embedding(n, 2, 77);
  for (Variant variant : {Variant::dca, Variant::dca_like, Variant::adca_like}) {
    auto problem = base;
    SolverConfig cfg;
    cfg.variant = variant;
    cfg.max_iter = 60;
    cfg.strict_checks = true;
    tsne::ExaggerationSchedule sched{4.0, 10};
    const auto phase = tsne::exaggeration_phase(problem, sched);
    const SolverResult res = solve(problem, x0, cfg, phase);
    if (res.descent_violations != 0) return {false, "descent violation"};
    for (std::size_t r = 1; r < res.trace.size(); ++r) {
      const auto& prev = res.trace[r - 1];
      const auto& cur = res.trace[r];
      if (prev.exaggerated == cur.exaggerated && cur.objective > prev.objective)
        return {false, std::string("objective increase in ") + to_string(variant)};
    }
    const double cap = cfg.eta * base.lipschitz_bound();
    for (const auto& row : res.trace)
      if (row.mu > cap) return {false, "mu above eta * 6 n sqrt(s)"};
  }
  return {true, "monotone, sufficient descent, mu within the Lipschitz ceiling"};
}

CheckOutcome check_two_points() {
  const tsne::AffinityMatrix p(2, {{0, 1, 0.5}});
  tsne::TsneProblem problem(p, 2);
  detail::GaussianSampler g(33);
  double worst = 0.0;
  for (int rep = 0; rep < 10; ++rep) {
    Embedding x(2, 2);
    for (std::size_t idx = 0; idx < x.size(); ++idx) x.data()[idx] = g.next();
    worst = std::max(worst, std::abs(problem.objective(x)));
  }
  SolverConfig cfg;
  const SolverResult res = dca_like_run(problem, init_embedding(2, 2, 4), cfg);
  char buf[96];
  std::snprintf(buf, sizeof buf, "max |F| = %.2e, terminated after %zu iteration(s)", worst,
                res.iterations);
  return {worst <= 1e-12 && res.iterations == 1 && res.reason == TerminationReason::rel_step, buf};
}

int cmd_check() {
  CheckContext ctx;
  ctx.run("gradient matches finite differences", check_gradient_fd);
  ctx.run("laplacian definition and row sums", check_laplacian);
  ctx.run("conjugate gradient identity solve", check_cg);
  ctx.run("knn affinity invariants", check_affinities);
  ctx.run("nesterov sequence growth", check_nesterov);
  ctx.run("mm equivalence of the subproblem", check_mm_equivalence);
  ctx.run("driver monotonicity and descent", check_drivers);
  ctx.run("two-point objective is identically zero", check_two_points);
  std::printf("%s\n", ctx.failures == 0 ? "all checks passed" : "CHECK FAILURES");
  return ctx.failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DCA, DCA-Like and ADCA-Like solvers with a t-SNE instantiation"};
  app.require_subcommand(1);

  RunSpec run_spec;
  std::vector<std::string> run_variants{"dca-like"};
  CLI::App* run = app.add_subcommand("run", "Run one variant on one seed");
  add_spec_options(run, run_spec, run_variants, nullptr);

  RunSpec bench_spec;
  std::vector<std::string> bench_variants{"all"};
  CLI::App* bench_cmd = app.add_subcommand("bench", "Run a variant x seed campaign");
  add_spec_options(bench_cmd, bench_spec, bench_variants, &bench_spec.serial);

  CLI::App* check = app.add_subcommand("check", "Run built-in invariant checks");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      run_spec.variants = parse_variants(run_variants);
      run_spec.format = format_from_path(run_spec.input);
      return cmd_run(run_spec);
    }
    if (bench_cmd->parsed()) {
      bench_spec.variants = parse_variants(bench_variants);
      bench_spec.format = format_from_path(bench_spec.input);
      return cmd_bench(bench_spec);
    }
    if (check->parsed()) return cmd_check();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
