#pragma once

#include <chrono>
#include <concepts>
#include <cstdio>
#include <functional>
#include <iostream>
#include <limits>
#include <optional>
#include <utility>

#include "dclike/core.hpp"

namespace dclike {

enum class Variant { dca, dca_like, adca_like };

inline const char* to_string(Variant v) {
  switch (v) {
    case Variant::dca: return "dca";
    case Variant::dca_like: return "dca-like";
    case Variant::adca_like: return "adca-like";
  }
  return "?";
}

inline Variant variant_from_string(const std::string& s) {
  if (s == "dca") return Variant::dca;
  if (s == "dca-like") return Variant::dca_like;
  if (s == "adca-like") return Variant::adca_like;
  throw std::invalid_argument("unknown variant '" + s + "' (expected dca | dca-like | adca-like)");
}

struct SolverConfig {
  Variant variant = Variant::dca_like;
  double mu0 = 1e-6;
  double eta = 2.0;
  double delta = 0.8;
  std::size_t max_iter = 10000;
  double rel_tol = 1e-8;
  std::size_t max_backtracks = 100;
  std::uint64_t seed = 0;
  double t0 = 1.0;
  // Descent-check failures warn on stderr by default; tests set strict and
  // get a hard failure instead.
  bool strict_checks = false;

  void validate() const {
    if (!(mu0 > 0.0)) throw std::invalid_argument("SolverConfig: mu0 must be positive");
    if (!(eta > 1.0)) throw std::invalid_argument("SolverConfig: eta must be > 1");
    if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("SolverConfig: delta must be in (0,1)");
    if (!(rel_tol > 0.0)) throw std::invalid_argument("SolverConfig: rel_tol must be positive");
    if (max_iter == 0) throw std::invalid_argument("SolverConfig: max_iter must be positive");
    if (max_backtracks == 0) throw std::invalid_argument("SolverConfig: max_backtracks must be positive");
    if (!(t0 >= 1.0)) throw std::invalid_argument("SolverConfig: t0 must be >= 1");
  }
};

/// Convexity-parameter state carried across iterations.
struct MuState {
  double mu_prev = 0.0;
  double mu_k = 0.0;
  double t_k = 1.0;
  std::size_t backtrack_count = 0;
};

struct TraceRow {
  std::size_t iter = 0;
  double elapsed_sec = 0.0;
  double objective = 0.0;
  double mu = 0.0;
  double step_norm = 0.0;  // ||x^{k+1} - x^k||
  std::size_t backtracks = 0;
  bool extrapolation_accepted = false;
  // In-memory only (not part of the serialized schema): marks the active
  // P-state segment and the distance to the reference point used by the
  // accelerated descent inequality.
  bool exaggerated = false;
  double step_from_ref = 0.0;  // ||x^{k+1} - v^k||
};

using IterationTrace = std::vector<TraceRow>;

enum class TerminationReason { max_iter, rel_step, error };

inline const char* to_string(TerminationReason r) {
  switch (r) {
    case TerminationReason::max_iter: return "max-iter";
    case TerminationReason::rel_step: return "rel-step";
    case TerminationReason::error: return "error";
  }
  return "?";
}

struct SolverResult {
  Embedding x;
  std::size_t iterations = 0;
  TerminationReason reason = TerminationReason::max_iter;
  double initial_objective = 0.0;
  IterationTrace trace;
  std::size_t descent_violations = 0;
};

/// Contract a concrete problem must satisfy to be driven by the solvers.
/// All capabilities are pure functions of their inputs. concave_subgrad
/// returns the subgradient xi with xi_i in the subdifferential of -h_i at
/// g_i(x_i), one non-positive value per composite term; composite_value
/// returns the matching g_i(x_i) values.
template <typename P>
concept DcProblem = requires(const P& p, const Embedding& x, const std::vector<double>& g, double mu) {
  { p.rows() } -> std::convertible_to<std::size_t>;
  { p.cols() } -> std::convertible_to<std::size_t>;
  { p.objective(x) } -> std::convertible_to<double>;
  { p.smooth_value(x) } -> std::convertible_to<double>;
  { p.smooth_grad(x) } -> std::convertible_to<Embedding>;
  { p.concave_subgrad(x) } -> std::convertible_to<std::vector<double>>;
  { p.composite_value(x) } -> std::convertible_to<std::vector<double>>;
  { p.h_values(g) } -> std::convertible_to<std::vector<double>>;
  { p.subproblem(x, x, g, mu) } -> std::convertible_to<Embedding>;
};

/// t_{k+1} = (1 + sqrt(1 + 4 t_k^2)) / 2. Strictly increasing from t >= 1.
inline double nesterov_t_next(double t) {
  if (!(t >= 1.0)) throw std::invalid_argument("nesterov_t_next: t must be >= 1");
  return (1.0 + std::sqrt(1.0 + 4.0 * t * t)) / 2.0;
}

/// w = x_k + ((t_k - 1) / t_next) (x_k - x_prev).
inline Embedding extrapolate(const Embedding& x_k, const Embedding& x_prev, double t_k,
                             double t_next) {
  if (!x_k.same_shape(x_prev)) throw std::invalid_argument("extrapolate: shape mismatch");
  const double coef = (t_k - 1.0) / t_next;
  Embedding w(x_k.rows(), x_k.cols());
  for (std::size_t idx = 0; idx < x_k.size(); ++idx)
    w.data()[idx] = x_k.data()[idx] + coef * (x_k.data()[idx] - x_prev.data()[idx]);
  return w;
}

/// Reported by the per-iteration phase callback. `changed` means the
/// objective definition differs from the previous iteration (the driver
/// re-anchors its cached objective and starts a new monotonicity segment);
/// `exaggerated` is copied into the trace row.
struct PhaseState {
  bool changed = false;
  bool exaggerated = false;
};
using PhaseCallback = std::function<PhaseState(std::size_t)>;

namespace detail {

/// Everything evaluated once at the reference point v^k. Backtracking reuses
/// these values verbatim; the reference point never changes within a step.
struct RefPoint {
  Embedding v;
  double objective = 0.0;
  Embedding grad;
  std::vector<double> xi;
  std::vector<double> g;
};

template <DcProblem P>
RefPoint make_ref(const P& problem, const Embedding& v, std::optional<double> known_objective = {}) {
  RefPoint ref;
  ref.objective = known_objective ? *known_objective : problem.objective(v);
  ref.grad = problem.smooth_grad(v);
  ref.xi = problem.concave_subgrad(v);
  for (double x : ref.xi)
    if (!(x <= 0.0))
      throw std::logic_error("concave_subgrad: positive entry violates the problem contract");
  ref.g = problem.composite_value(v);
  ref.v = v;
  return ref;
}

/// U_mu(x_next, v) - F(x_next) with
///   U_mu = F(v) + <grad f(v), x_next - v> + (mu/2) ||x_next - v||^2
///          - <xi(v), g(x_next) - g(v)>.
inline double gap_against_ref(const RefPoint& ref, const Embedding& x_next, double f_next,
                              const std::vector<double>& g_next, double mu) {
  KahanSum lin, quad;
  for (std::size_t idx = 0; idx < x_next.size(); ++idx) {
    const double d = x_next.data()[idx] - ref.v.data()[idx];
    lin.add(ref.grad.data()[idx] * d);
    quad.add(d * d);
  }
  KahanSum comp;
  for (std::size_t e = 0; e < ref.xi.size(); ++e) comp.add(ref.xi[e] * (g_next[e] - ref.g[e]));
  return ref.objective + lin.value() + 0.5 * mu * quad.value() - comp.value() - f_next;
}

struct StepOutcome {
  Embedding x_next;
  double mu_out = 0.0;
  std::size_t backtracks = 0;
  double objective_next = 0.0;
  std::vector<double> g_next;
};

template <DcProblem P>
StepOutcome backtrack_from_ref(const P& problem, const RefPoint& ref, double mu_in,
                               const SolverConfig& config) {
  double mu = mu_in;
  for (std::size_t attempt = 0; attempt <= config.max_backtracks; ++attempt) {
    Embedding x_next = problem.subproblem(ref.v, ref.grad, ref.xi, mu);
    const double f_next = problem.objective(x_next);
    std::vector<double> g_next = problem.composite_value(x_next);
    const double gap = gap_against_ref(ref, x_next, f_next, g_next, mu);
    if (gap >= 0.0)
      return {std::move(x_next), mu, attempt, f_next, std::move(g_next)};
    mu *= config.eta;
  }
  char buf[192];
  std::snprintf(buf, sizeof buf,
                "backtrack_step: majorization condition unreachable after %zu increases "
                "(mu=%.3e); the gradient or objective implementation is inconsistent",
                config.max_backtracks, mu);
  throw std::runtime_error(buf);
}

inline void report_descent_violation(const SolverConfig& config, const char* driver, std::size_t k,
                                     double drop, double needed) {
  char buf[192];
  std::snprintf(buf, sizeof buf,
                "%s: sufficient-descent check failed at iteration %zu (drop=%.6e, needed=%.6e)",
                driver, k, drop, needed);
  if (config.strict_checks) throw std::logic_error(buf);
  std::cerr << "dclike: warning: " << buf << "\n";
}

inline double relative_step(double step_norm, double prev_norm) {
  if (prev_norm > 0.0) return step_norm / prev_norm;
  return step_norm == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
}

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

}  // namespace detail

/// U_mu(x_next, v) - F(x_next); a non-negative gap means the backtracking
/// condition holds at (x_next, v, mu). Evaluates the problem at v and x_next.
template <DcProblem P>
double surrogate_gap(const P& problem, const Embedding& x_next, const Embedding& v, double mu) {
  if (!(mu > 0.0)) throw std::invalid_argument("surrogate_gap: mu must be positive");
  if (x_next.rows() != problem.rows() || x_next.cols() != problem.cols() || !x_next.same_shape(v))
    throw std::invalid_argument("surrogate_gap: dimension mismatch");
  const auto ref = detail::make_ref(problem, v);
  return detail::gap_against_ref(ref, x_next, problem.objective(x_next),
                                 problem.composite_value(x_next), mu);
}

struct BacktrackResult {
  Embedding x_next;
  double mu_out = 0.0;
  std::size_t backtracks = 0;
};

/// Solve the subproblem at v with mu = eta^j * mu_in for the smallest j >= 0
/// whose surrogate gap is non-negative. grad f(v) and xi(v) are evaluated
/// once and reused across all attempts.
template <DcProblem P>
BacktrackResult backtrack_step(const P& problem, const Embedding& v, double mu_in,
                               const SolverConfig& config) {
  config.validate();
  if (!(mu_in > 0.0)) throw std::invalid_argument("backtrack_step: mu_in must be positive");
  if (v.rows() != problem.rows() || v.cols() != problem.cols())
    throw std::invalid_argument("backtrack_step: dimension mismatch");
  const auto ref = detail::make_ref(problem, v);
  auto out = detail::backtrack_from_ref(problem, ref, mu_in, config);
  return {std::move(out.x_next), out.mu_out, out.backtracks};
}

namespace detail {

template <DcProblem P>
void check_start(const P& problem, const Embedding& x0, const SolverConfig& config,
                 const char* driver) {
  config.validate();
  if (x0.rows() != problem.rows() || x0.cols() != problem.cols())
    throw std::invalid_argument(std::string(driver) + ": x0 dimension mismatch");
  if (!x0.all_finite())
    throw std::invalid_argument(std::string(driver) + ": x0 has non-finite entries");
}

}  // namespace detail

/// DCA-Like: per iteration, reset mu to max(mu0, delta * mu_{k-1}), take a
/// backtracked step from x^k, stop on the relative-step rule or max_iter.
template <DcProblem P>
SolverResult dca_like_run(P& problem, Embedding x0, const SolverConfig& config,
                          const PhaseCallback& phase = {}) {
  detail::check_start(problem, x0, config, "dca_like_run");
  const auto start = detail::Clock::now();

  SolverResult result;
  Embedding x = std::move(x0);
  PhaseState ph = phase ? phase(0) : PhaseState{};
  double f_curr = problem.objective(x);
  if (!std::isfinite(f_curr)) throw std::runtime_error("dca_like_run: objective(x0) is not finite");
  result.initial_objective = f_curr;

  MuState mu{config.mu0, config.mu0, config.t0, 0};
  for (std::size_t k = 0; k < config.max_iter; ++k) {
    if (k > 0 && phase) {
      ph = phase(k);
      if (ph.changed) {
        f_curr = problem.objective(x);
        if (!std::isfinite(f_curr))
          throw std::runtime_error("dca_like_run: objective became non-finite at a phase switch");
      }
    }
    const auto ref = detail::make_ref(problem, x, f_curr);
    // STEP 2: mu_k = max(mu0, delta * mu_{k-1}); mu.mu_k holds the previous
    // iteration's final (post-backtrack) value.
    const double mu_in = (k == 0) ? config.mu0 : std::max(config.mu0, config.delta * mu.mu_k);
    auto step = detail::backtrack_from_ref(problem, ref, mu_in, config);
    mu = {mu.mu_k, step.mu_out, mu.t_k, step.backtracks};

    const double step_norm = frob_dist(step.x_next, x);
    const double needed = 0.5 * step.mu_out * step_norm * step_norm;
    const double slack = 1e-10 * (1.0 + std::abs(f_curr));
    if (f_curr - step.objective_next < needed - slack) {
      ++result.descent_violations;
      detail::report_descent_violation(config, "dca_like_run", k, f_curr - step.objective_next,
                                       needed);
    }

    const double prev_norm = frob_norm(x);
    result.trace.push_back({k, detail::seconds_since(start), step.objective_next, step.mu_out,
                            step_norm, step.backtracks, false, ph.exaggerated, step_norm});
    x = std::move(step.x_next);
    f_curr = step.objective_next;
    ++result.iterations;

    if (detail::relative_step(step_norm, prev_norm) <= config.rel_tol) {
      result.reason = TerminationReason::rel_step;
      break;
    }
  }
  result.x = std::move(x);
  return result;
}

/// Classic DCA on the fixed decomposition: constant mu within an iteration,
/// increased by eta (and the step redone from x^k) whenever the objective
/// fails to decrease, never shrunk. An equal objective with a step still
/// above the stopping threshold counts as "no progress" and also raises mu;
/// an equal objective with a converged step is accepted and terminates.
template <DcProblem P>
SolverResult dca_baseline_run(P& problem, Embedding x0, const SolverConfig& config,
                              const PhaseCallback& phase = {}) {
  detail::check_start(problem, x0, config, "dca_baseline_run");
  const auto start = detail::Clock::now();

  SolverResult result;
  Embedding x = std::move(x0);
  PhaseState ph = phase ? phase(0) : PhaseState{};
  double f_curr = problem.objective(x);
  if (!std::isfinite(f_curr))
    throw std::runtime_error("dca_baseline_run: objective(x0) is not finite");
  result.initial_objective = f_curr;

  double mu = config.mu0;
  for (std::size_t k = 0; k < config.max_iter; ++k) {
    if (k > 0 && phase) {
      ph = phase(k);
      if (ph.changed) {
        f_curr = problem.objective(x);
        if (!std::isfinite(f_curr))
          throw std::runtime_error("dca_baseline_run: objective became non-finite at a phase switch");
      }
    }
    const auto ref = detail::make_ref(problem, x, f_curr);
    const double prev_norm = frob_norm(x);

    Embedding x_next;
    double f_next = 0.0;
    double step_norm = 0.0;
    std::size_t redos = 0;
    for (std::size_t attempt = 0;; ++attempt) {
      if (attempt > config.max_backtracks) {
        char buf[160];
        std::snprintf(buf, sizeof buf,
                      "dca_baseline_run: objective keeps increasing after %zu mu escalations "
                      "(mu=%.3e) at iteration %zu",
                      config.max_backtracks, mu, k);
        throw std::runtime_error(buf);
      }
      x_next = problem.subproblem(ref.v, ref.grad, ref.xi, mu);
      f_next = problem.objective(x_next);
      step_norm = frob_dist(x_next, x);
      const bool increased = !(f_next <= f_curr);  // non-finite counts as an increase
      const bool stalled = f_next == f_curr && step_norm > config.rel_tol * prev_norm;
      if (!increased && !stalled) {
        redos = attempt;
        break;
      }
      mu *= config.eta;
    }

    result.trace.push_back({k, detail::seconds_since(start), f_next, mu, step_norm, redos, false,
                            ph.exaggerated, step_norm});
    x = std::move(x_next);
    f_curr = f_next;
    ++result.iterations;

    if (detail::relative_step(step_norm, prev_norm) <= config.rel_tol) {
      result.reason = TerminationReason::rel_step;
      break;
    }
  }
  result.x = std::move(x);
  return result;
}

/// ADCA-Like: backtracked steps taken from the extrapolated point w^k when
/// F(w^k) <= F(x^k) (ties and the first iteration pick w), from x^k
/// otherwise. A non-finite F(w^k) counts as "not better".
template <DcProblem P>
SolverResult adca_like_run(P& problem, Embedding x0, const SolverConfig& config,
                           const PhaseCallback& phase = {}) {
  detail::check_start(problem, x0, config, "adca_like_run");
  const auto start = detail::Clock::now();

  SolverResult result;
  Embedding x = std::move(x0);
  Embedding w = x;  // w^0 = x^0
  double t = config.t0;
  PhaseState ph = phase ? phase(0) : PhaseState{};
  double f_curr = problem.objective(x);
  if (!std::isfinite(f_curr)) throw std::runtime_error("adca_like_run: objective(x0) is not finite");
  result.initial_objective = f_curr;

  MuState mu{config.mu0, config.mu0, t, 0};
  for (std::size_t k = 0; k < config.max_iter; ++k) {
    if (k > 0 && phase) {
      ph = phase(k);
      if (ph.changed) {
        f_curr = problem.objective(x);
        if (!std::isfinite(f_curr))
          throw std::runtime_error("adca_like_run: objective became non-finite at a phase switch");
      }
    }

    bool accepted;
    double f_ref;
    const Embedding* v;
    if (k == 0) {
      accepted = true;  // w^0 = x^0, F equal, tie picks w
      v = &w;
      f_ref = f_curr;
    } else {
      const double f_w = problem.objective(w);
      accepted = std::isfinite(f_w) && f_w <= f_curr;
      v = accepted ? &w : &x;
      f_ref = accepted ? f_w : f_curr;
    }

    const auto ref = detail::make_ref(problem, *v, f_ref);
    const double mu_in = (k == 0) ? config.mu0 : std::max(config.mu0, config.delta * mu.mu_k);
    auto step = detail::backtrack_from_ref(problem, ref, mu_in, config);

    const double step_norm = frob_dist(step.x_next, x);
    const double step_from_ref = frob_dist(step.x_next, *v);
    const double needed = 0.5 * step.mu_out * step_from_ref * step_from_ref;
    const double slack = 1e-10 * (1.0 + std::abs(f_curr));
    if (f_curr - step.objective_next < needed - slack) {
      ++result.descent_violations;
      detail::report_descent_violation(config, "adca_like_run", k, f_curr - step.objective_next,
                                       needed);
    }

    const double t_next = nesterov_t_next(t);
    w = extrapolate(step.x_next, x, t, t_next);
    mu = {mu.mu_k, step.mu_out, t_next, step.backtracks};

    const double prev_norm = frob_norm(x);
    result.trace.push_back({k, detail::seconds_since(start), step.objective_next, step.mu_out,
                            step_norm, step.backtracks, accepted, ph.exaggerated, step_from_ref});
    x = std::move(step.x_next);
    f_curr = step.objective_next;
    t = t_next;
    ++result.iterations;

    if (detail::relative_step(step_norm, prev_norm) <= config.rel_tol) {
      result.reason = TerminationReason::rel_step;
      break;
    }
  }
  result.x = std::move(x);
  return result;
}

template <DcProblem P>
SolverResult solve(P& problem, Embedding x0, const SolverConfig& config,
                   const PhaseCallback& phase = {}) {
  switch (config.variant) {
    case Variant::dca: return dca_baseline_run(problem, std::move(x0), config, phase);
    case Variant::dca_like: return dca_like_run(problem, std::move(x0), config, phase);
    case Variant::adca_like: return adca_like_run(problem, std::move(x0), config, phase);
  }
  throw std::invalid_argument("solve: unknown variant");
}

}  // namespace dclike
