#pragma once

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <thread>

#include "dclike/io.hpp"
#include "dclike/tsne.hpp"

namespace dclike {

/// One benchmark campaign: which variants to run on which seeds, with the
/// full pipeline configuration.
struct RunSpec {
  std::string input;
  TableFormat format = TableFormat::csv;
  std::vector<Variant> variants{Variant::dca_like};
  std::size_t k = 10;
  std::size_t dims = 2;
  double mu0 = 1e-6;
  double eta = 2.0;
  double delta = 0.8;
  std::size_t max_iter = 10000;
  double rel_tol = 1e-8;
  double exaggeration = 4.0;
  std::size_t exaggeration_iters = 20;
  std::vector<std::uint64_t> seeds{0};
  std::string out_dir = ".";
  bool serial = false;

  SolverConfig solver_config(Variant variant, std::uint64_t seed) const {
    SolverConfig cfg;
    cfg.variant = variant;
    cfg.mu0 = mu0;
    cfg.eta = eta;
    cfg.delta = delta;
    cfg.max_iter = max_iter;
    cfg.rel_tol = rel_tol;
    cfg.seed = seed;
    return cfg;
  }

  tsne::ExaggerationSchedule schedule() const { return {exaggeration, exaggeration_iters}; }

  void validate() const {
    solver_config(variants.empty() ? Variant::dca_like : variants.front(), 0).validate();
    schedule().validate();
    if (input.empty()) throw std::invalid_argument("RunSpec: input path is empty");
    if (variants.empty()) throw std::invalid_argument("RunSpec: no variants");
    if (seeds.empty()) throw std::invalid_argument("RunSpec: no seeds");
    if (k == 0) throw std::invalid_argument("RunSpec: k must be >= 1");
    if (dims == 0) throw std::invalid_argument("RunSpec: dims must be >= 1");
  }
};

struct RunResult {
  SolverResult solver;
  double solver_sec = 0.0;
  double pipeline_sec = 0.0;
  std::string embedding_path;
  std::string trace_path;
};

inline std::string run_file_stem(Variant variant, std::uint64_t seed) {
  return std::string(to_string(variant)) + "-seed" + std::to_string(seed);
}

namespace detail {

template <typename Fn>
auto stage(const char* name, Fn&& fn) {
  try {
    return fn();
  } catch (const std::exception& e) {
    throw std::runtime_error(std::string(name) + ": " + e.what());
  }
}

}  // namespace detail

/// Full single-run pipeline: load, kNN graph, binary affinities, seeded
/// init, selected driver under the exaggeration schedule, outputs written to
/// <out_dir>/<variant>-seed<seed>.{emb,trace}.csv.
inline RunResult run_once(const RunSpec& spec, Variant variant, std::uint64_t seed) {
  namespace fs = std::filesystem;
  spec.validate();
  const auto start = detail::Clock::now();

  const Matrix data = detail::stage("load", [&] { return load_matrix(spec.input, spec.format); });
  if (spec.k >= data.rows())
    throw std::runtime_error("knn: k = " + std::to_string(spec.k) +
                             " must be below the point count " + std::to_string(data.rows()));
  const NeighborList neighbors = detail::stage("knn", [&] { return knn_graph(data, spec.k); });
  tsne::AffinityMatrix p = detail::stage(
      "affinities", [&] { return tsne::build_knn_affinities(neighbors, data.rows()); });
  Embedding x0 = init_embedding(data.rows(), spec.dims, seed);

  tsne::TsneProblem problem(std::move(p), spec.dims);
  const PhaseCallback phase = tsne::exaggeration_phase(problem, spec.schedule());
  const SolverConfig cfg = spec.solver_config(variant, seed);

  RunResult out;
  out.solver =
      detail::stage("solve", [&] { return solve(problem, std::move(x0), cfg, phase); });

  detail::stage("write", [&] {
    fs::create_directories(spec.out_dir);
    const std::string stem = (fs::path(spec.out_dir) / run_file_stem(variant, seed)).string();
    out.embedding_path = stem + ".emb.csv";
    out.trace_path = stem + ".trace.csv";
    write_embedding(out.solver.x, out.embedding_path);
    write_trace(out.solver.trace, out.trace_path);
    return 0;
  });

  out.solver_sec = out.solver.trace.empty() ? 0.0 : out.solver.trace.back().elapsed_sec;
  out.pipeline_sec = detail::seconds_since(start);
  return out;
}

/// Uses spec.variants.front(); the single-run entry point the CLI exposes.
inline RunResult run_once(const RunSpec& spec, std::uint64_t seed) {
  spec.validate();
  return run_once(spec, spec.variants.front(), seed);
}

struct Stats {
  double mean = 0.0;
  double median = 0.0;
  double stddev = 0.0;
  std::size_t n = 0;
};

inline Stats compute_stats(std::vector<double> values) {
  Stats s;
  s.n = values.size();
  if (values.empty()) return s;
  KahanSum sum;
  for (double v : values) sum.add(v);
  s.mean = sum.value() / static_cast<double>(s.n);
  std::sort(values.begin(), values.end());
  s.median = (s.n % 2 == 1) ? values[s.n / 2]
                            : 0.5 * (values[s.n / 2 - 1] + values[s.n / 2]);
  if (s.n > 1) {
    KahanSum sq;
    for (double v : values) sq.add((v - s.mean) * (v - s.mean));
    s.stddev = std::sqrt(sq.value() / static_cast<double>(s.n - 1));
  }
  return s;
}

struct SeedOutcome {
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  double objective = 0.0;
  double iterations = 0.0;
  double solver_sec = 0.0;
  double pipeline_sec = 0.0;
};

struct VariantReport {
  Variant variant = Variant::dca_like;
  std::vector<SeedOutcome> runs;

  std::vector<double> completed(double SeedOutcome::* field) const {
    std::vector<double> v;
    for (const auto& r : runs)
      if (r.ok) v.push_back(r.*field);
    return v;
  }

  bool failed() const {
    for (const auto& r : runs)
      if (r.ok) return false;
    return true;
  }
};

struct BenchReport {
  std::vector<VariantReport> variants;
  std::string report_csv_path;

  bool all_ok() const {
    for (const auto& v : variants)
      for (const auto& r : v.runs)
        if (!r.ok) return false;
    return true;
  }

  static constexpr std::pair<const char*, double SeedOutcome::*> kMetrics[] = {
      {"objective", &SeedOutcome::objective},
      {"iterations", &SeedOutcome::iterations},
      {"solver_time_sec", &SeedOutcome::solver_sec},
      {"pipeline_time_sec", &SeedOutcome::pipeline_sec},
  };

  void write_csv(const std::string& path) const {
    auto f = detail::open_for_write(path, "bench report");
    std::fputs("variant,metric,mean,median,stddev,n_seeds\n", f.get());
    for (const auto& v : variants) {
      for (const auto& [name, field] : kMetrics) {
        const Stats s = compute_stats(v.completed(field));
        std::fprintf(f.get(), "%s,%s,", to_string(v.variant), name);
        detail::format_double(f.get(), s.mean);
        std::fputc(',', f.get());
        detail::format_double(f.get(), s.median);
        std::fputc(',', f.get());
        detail::format_double(f.get(), s.stddev);
        std::fprintf(f.get(), ",%zu\n", s.n);
      }
    }
    detail::finish_write(f.get(), path, "bench report");
  }

  std::string text_table() const {
    std::ostringstream os;
    char line[160];
    std::snprintf(line, sizeof line, "%-12s %14s %12s %12s %14s\n", "variant", "objective",
                  "iterations", "solver_sec", "pipeline_sec");
    os << line;
    for (const auto& v : variants) {
      if (v.failed()) {
        std::snprintf(line, sizeof line, "%-12s %s\n", to_string(v.variant), "FAILED (all seeds)");
        os << line;
        continue;
      }
      const Stats obj = compute_stats(v.completed(&SeedOutcome::objective));
      const Stats it = compute_stats(v.completed(&SeedOutcome::iterations));
      const Stats st = compute_stats(v.completed(&SeedOutcome::solver_sec));
      const Stats pt = compute_stats(v.completed(&SeedOutcome::pipeline_sec));
      std::snprintf(line, sizeof line, "%-12s %14.6f %12.1f %12.3f %14.3f\n", to_string(v.variant),
                    obj.mean, it.mean, st.mean, pt.mean);
      os << line;
    }
    for (const auto& v : variants)
      for (const auto& r : v.runs)
        if (!r.ok)
          os << "  failed: " << to_string(v.variant) << " seed " << r.seed << ": " << r.error
             << "\n";
    return os.str();
  }
};

namespace detail {

inline std::size_t thread_cap() {
  if (const char* env = std::getenv("DCLIKE_THREADS")) {
    char* end = nullptr;
    const unsigned long v = std::strtoul(env, &end, 10);
    if (end && *end == '\0' && v > 0) return static_cast<std::size_t>(v);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw ? hw : 1;
}

}  // namespace detail

/// Runs every variant on every seed (independent jobs, optionally in
/// parallel), aggregates completed runs, and writes report.csv to out_dir.
/// Failures are reported per seed and leave the other jobs running.
inline BenchReport bench(const RunSpec& spec) {
  spec.validate();

  struct Job {
    Variant variant;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (Variant v : spec.variants)
    for (std::uint64_t s : spec.seeds) jobs.push_back({v, s});

  std::vector<SeedOutcome> outcomes(jobs.size());
  const std::size_t workers =
      spec.serial ? 1 : std::min(jobs.size(), detail::thread_cap());

  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t idx = next.fetch_add(1); idx < jobs.size(); idx = next.fetch_add(1)) {
      SeedOutcome& o = outcomes[idx];
      o.seed = jobs[idx].seed;
      try {
        const RunResult r = run_once(spec, jobs[idx].variant, jobs[idx].seed);
        o.ok = true;
        o.objective = r.solver.trace.empty() ? r.solver.initial_objective
                                             : r.solver.trace.back().objective;
        o.iterations = static_cast<double>(r.solver.iterations);
        o.solver_sec = r.solver_sec;
        o.pipeline_sec = r.pipeline_sec;
      } catch (const std::exception& e) {
        o.ok = false;
        o.error = e.what();
      }
    }
  };

  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }

  BenchReport report;
  std::size_t idx = 0;
  for (Variant v : spec.variants) {
    VariantReport vr;
    vr.variant = v;
    for (std::size_t s = 0; s < spec.seeds.size(); ++s) vr.runs.push_back(outcomes[idx++]);
    report.variants.push_back(std::move(vr));
  }

  std::filesystem::create_directories(spec.out_dir);
  report.report_csv_path = (std::filesystem::path(spec.out_dir) / "report.csv").string();
  report.write_csv(report.report_csv_path);
  return report;
}

}  // namespace dclike
