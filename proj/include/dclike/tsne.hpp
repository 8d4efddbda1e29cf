#pragma once

#include <algorithm>
#include <map>

#include "dclike/core.hpp"
#include "dclike/solver.hpp"
#include "dclike/sparse.hpp"

namespace dclike::tsne {

struct AffinityEntry {
  std::size_t i = 0;
  std::size_t j = 0;
  double p = 0.0;
};

/// Sparse symmetric joint probabilities P. Both orientations of every pair
/// are stored, sorted row-major, so the entry list walks the ordered pairs
/// (i, j), i != j, exactly as the composite sums do. Zero diagonal, total
/// mass 1 within 1e-12, pattern fixed after construction.
class AffinityMatrix {
 public:
  AffinityMatrix() = default;

  /// `entries` may list each pair once (either orientation) or both; missing
  /// transposes are mirrored, conflicting values rejected.
  AffinityMatrix(std::size_t n, const std::vector<AffinityEntry>& entries) {
    build(n, entries, /*rescale=*/false);
  }

  /// Same, but rescales the values so the total mass is exactly renormalized.
  static AffinityMatrix normalized(std::size_t n, const std::vector<AffinityEntry>& entries) {
    AffinityMatrix out;
    out.build(n, entries, /*rescale=*/true);
    return out;
  }

  std::size_t points() const { return n_; }
  std::size_t entry_count() const { return entries_.size(); }
  const std::vector<AffinityEntry>& entries() const { return entries_; }
  double total_mass() const { return mass_; }

 private:
  void build(std::size_t n, const std::vector<AffinityEntry>& raw, bool rescale) {
    n_ = n;
    if (n_ < 2) throw std::invalid_argument("AffinityMatrix: need at least two points");
    std::map<std::pair<std::size_t, std::size_t>, double> pairs;
    for (const auto& e : raw) {
      if (e.i >= n_ || e.j >= n_) throw std::invalid_argument("AffinityMatrix: index out of range");
      if (e.i == e.j) throw std::invalid_argument("AffinityMatrix: diagonal entry");
      if (!(e.p >= 0.0) || !std::isfinite(e.p))
        throw std::invalid_argument("AffinityMatrix: values must be finite and non-negative");
      const auto key = std::minmax(e.i, e.j);
      auto [it, inserted] = pairs.emplace(key, e.p);
      if (!inserted && it->second != e.p)
        throw std::invalid_argument("AffinityMatrix: conflicting values for a symmetric pair");
    }
    if (pairs.empty()) throw std::invalid_argument("AffinityMatrix: no off-diagonal entries");

    double scale = 1.0;
    if (rescale) {
      KahanSum total;
      for (const auto& [key, p] : pairs) total.add(2.0 * p);
      if (!(total.value() > 0.0)) throw std::invalid_argument("AffinityMatrix: zero total mass");
      scale = 1.0 / total.value();
    }

    entries_.reserve(2 * pairs.size());
    for (const auto& [key, p] : pairs) {
      entries_.push_back({key.first, key.second, scale * p});
      entries_.push_back({key.second, key.first, scale * p});
    }
    std::sort(entries_.begin(), entries_.end(), [](const AffinityEntry& a, const AffinityEntry& b) {
      return a.i != b.i ? a.i < b.i : a.j < b.j;
    });

    KahanSum mass;
    for (const auto& e : entries_) mass.add(e.p);
    mass_ = mass.value();
    if (std::abs(mass_ - 1.0) > 1e-12)
      throw std::invalid_argument("AffinityMatrix: total mass differs from 1 by more than 1e-12");
  }

  std::size_t n_ = 0;
  std::vector<AffinityEntry> entries_;
  double mass_ = 0.0;
};

/// Multiplicative view of an AffinityMatrix. factor == 1 reads the stored
/// values untouched (bit-exact restoration after early exaggeration).
class AffinityView {
 public:
  AffinityView(const AffinityMatrix& base, double factor = 1.0) : base_(&base), factor_(factor) {
    if (!(factor >= 1.0) || !std::isfinite(factor))
      throw std::invalid_argument("AffinityView: factor must be finite and >= 1");
  }

  const AffinityMatrix& base() const { return *base_; }
  double factor() const { return factor_; }
  std::size_t points() const { return base_->points(); }
  std::size_t entry_count() const { return base_->entry_count(); }
  const std::vector<AffinityEntry>& entries() const { return base_->entries(); }

  double p(std::size_t e) const {
    const double v = base_->entries()[e].p;
    return factor_ == 1.0 ? v : factor_ * v;
  }

  // sum over stored (ordered) entries of p log p, 0 log 0 = 0.
  double sum_p_log_p() const {
    KahanSum s;
    for (std::size_t e = 0; e < entry_count(); ++e) {
      const double v = p(e);
      if (v > 0.0) s.add(v * std::log(v));
    }
    return s.value();
  }

 private:
  const AffinityMatrix* base_;
  double factor_;
};

struct ExaggerationSchedule {
  double factor = 4.0;
  std::size_t duration = 20;

  void validate() const {
    if (!(factor >= 1.0) || !std::isfinite(factor))
      throw std::invalid_argument("ExaggerationSchedule: factor must be finite and >= 1");
  }

  bool active_at(std::size_t k) const { return factor != 1.0 && k < duration; }
};

/// For k < duration, a view scaled by the exaggeration factor; afterwards
/// the original P, bit-exactly.
inline AffinityView exaggerate(const AffinityMatrix& p, const ExaggerationSchedule& schedule,
                               std::size_t k) {
  schedule.validate();
  return AffinityView(p, schedule.active_at(k) ? schedule.factor : 1.0);
}

/// xi_ij = -p_ij / (1 + ||x_i - x_j||^2) on P's pattern, entry-aligned with
/// the pattern's ordered entry list.
struct XiMatrix {
  const AffinityMatrix* pattern = nullptr;
  std::vector<double> values;
};

/// Z = sum over ordered pairs k != l of (1 + ||x_k - x_l||^2)^{-1}, exact
/// O(n^2) evaluation. Plain accumulation along each row, compensated across
/// rows; the order is fixed, so the result is reproducible.
inline double pair_normalizer(const Embedding& x) {
  const std::size_t n = x.rows();
  if (n < 2) throw std::invalid_argument("tsne: need at least two points");
  const std::size_t s = x.cols();
  KahanSum z;
  if (s == 2) {
    for (std::size_t i = 0; i < n; ++i) {
      const double xi0 = x(i, 0);
      const double xi1 = x(i, 1);
      double row = 0.0;
      const double* b = x.row(i + 1);
      for (std::size_t j = i + 1; j < n; ++j, b += 2) {
        const double d0 = xi0 - b[0];
        const double d1 = xi1 - b[1];
        double q = d0 * d0;
        q += d1 * d1;
        row += 2.0 / (1.0 + q);
      }
      z.add(row);
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      double row = 0.0;
      for (std::size_t j = i + 1; j < n; ++j)
        row += 2.0 / (1.0 + squared_distance_rows(x, i, j));
      z.add(row);
    }
  }
  return z.value();
}

/// Smooth part f(x) = sum p log p + log Z.
inline double smooth_value(const Embedding& x, const AffinityView& p) {
  return p.sum_p_log_p() + std::log(pair_normalizer(x));
}

/// Composite part sum over ordered pairs of p_ij log(1 + ||x_i - x_j||^2).
inline double composite_objective(const Embedding& x, const AffinityView& p) {
  KahanSum s;
  const auto& entries = p.entries();
  for (std::size_t e = 0; e < entries.size(); ++e) {
    const double w = p.p(e);
    if (w > 0.0) s.add(w * std::log1p(squared_distance_rows(x, entries[e].i, entries[e].j)));
  }
  return s.value();
}

/// KL(P || Q) through the decomposition
///   sum p log p + log Z + sum p log(1 + ||x_i - x_j||^2).
inline double objective(const Embedding& x, const AffinityView& p) {
  if (x.rows() != p.points()) throw std::invalid_argument("tsne::objective: dimension mismatch");
  return smooth_value(x, p) + composite_objective(x, p);
}

/// Gradient of the smooth part: row i is
///   sum_j -4 (x_i - x_j) (1 + ||x_i - x_j||^2)^{-2} / Z.
/// Does not depend on P.
inline Embedding grad_f(const Embedding& x) {
  const std::size_t n = x.rows();
  const std::size_t s = x.cols();
  const double z = pair_normalizer(x);
  Embedding grad(n, s);
  if (s == 2) {
    for (std::size_t i = 0; i < n; ++i) {
      const double xi0 = x(i, 0);
      const double xi1 = x(i, 1);
      double gi0 = grad(i, 0);
      double gi1 = grad(i, 1);
      const double* b = x.row(i + 1);
      double* g = grad.row(i + 1);
      for (std::size_t j = i + 1; j < n; ++j, b += 2, g += 2) {
        const double d0 = xi0 - b[0];
        const double d1 = xi1 - b[1];
        double q = d0 * d0;
        q += d1 * d1;
        const double u = 1.0 + q;
        const double coef = -4.0 / (u * u * z);
        const double t0 = coef * d0;
        const double t1 = coef * d1;
        gi0 += t0;
        gi1 += t1;
        g[0] -= t0;
        g[1] -= t1;
      }
      grad(i, 0) = gi0;
      grad(i, 1) = gi1;
    }
    return grad;
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double u = 1.0 + squared_distance_rows(x, i, j);
      const double coef = -4.0 / (u * u * z);
      const double* xi = x.row(i);
      const double* xj = x.row(j);
      double* gi = grad.row(i);
      double* gj = grad.row(j);
      for (std::size_t d = 0; d < s; ++d) {
        const double t = coef * (xi[d] - xj[d]);
        gi[d] += t;
        gj[d] -= t;
      }
    }
  }
  return grad;
}

/// g values on P's pattern: squared pairwise embedding distances, one per
/// stored ordered entry.
inline std::vector<double> composite_value(const Embedding& x, const AffinityMatrix& pattern) {
  if (x.rows() != pattern.points())
    throw std::invalid_argument("tsne::composite_value: dimension mismatch");
  std::vector<double> g;
  g.reserve(pattern.entry_count());
  for (const auto& e : pattern.entries()) g.push_back(squared_distance_rows(x, e.i, e.j));
  return g;
}

inline XiMatrix compute_xi(const Embedding& x, const AffinityView& p) {
  if (x.rows() != p.points()) throw std::invalid_argument("tsne::compute_xi: dimension mismatch");
  XiMatrix xi;
  xi.pattern = &p.base();
  xi.values.reserve(p.entry_count());
  const auto& entries = p.entries();
  for (std::size_t e = 0; e < entries.size(); ++e)
    xi.values.push_back(-p.p(e) / (1.0 + squared_distance_rows(x, entries[e].i, entries[e].j)));
  return xi;
}

/// Weight matrix W = -xi - xi^T on xi's (symmetric) pattern.
inline SparseCoo neg_sym_weights(const XiMatrix& xi) {
  if (!xi.pattern || xi.values.size() != xi.pattern->entry_count())
    throw std::invalid_argument("neg_sym_weights: xi does not match its pattern");
  std::vector<Triplet> triplets;
  triplets.reserve(xi.values.size());
  const auto& entries = xi.pattern->entries();
  for (std::size_t e = 0; e < entries.size(); ++e)
    triplets.push_back({entries[e].i, entries[e].j, -2.0 * xi.values[e]});
  return SparseCoo(xi.pattern->points(), std::move(triplets));
}

/// x+ = (2 L_{-xi - xi^T} + mu I)^{-1} (-grad + mu v), solved column by
/// column by CG warm-started at v.
inline Embedding subproblem_solve(const Embedding& v, const Embedding& grad, const XiMatrix& xi,
                                  double mu, const CgOptions& cg = {}) {
  if (!(mu > 0.0)) throw std::invalid_argument("subproblem_solve: mu must be positive");
  if (!v.same_shape(grad)) throw std::invalid_argument("subproblem_solve: shape mismatch");
  for (double w : xi.values)
    if (!(w <= 0.0)) throw std::invalid_argument("subproblem_solve: xi entries must be <= 0");
  const SparseCoo w = neg_sym_weights(xi);
  const LaplacianOp lap(w);
  const ShiftedLaplacian op(lap, mu);
  Matrix rhs(v.rows(), v.cols());
  for (std::size_t idx = 0; idx < v.size(); ++idx)
    rhs.data()[idx] = mu * v.data()[idx] - grad.data()[idx];

  // CG in doubles cannot push the relative residual below ~eps * cond(A).
  // When mu is far under the local curvature (early backtracking attempts,
  // tiny instances) the requested tolerance is floored at that limit; the
  // Gershgorin bound 4 max-row-sum(W) + mu caps the spectrum.
  double rs_max = 0.0;
  {
    std::vector<double> rs(w.size(), 0.0);
    for (const auto& e : w.entries()) rs[e.row] += e.value;
    for (double r : rs) rs_max = std::max(rs_max, r);
  }
  const double cond_bound = (4.0 * rs_max + mu) / mu;
  CgOptions effective = cg;
  effective.tol =
      std::max(cg.tol, 100.0 * std::numeric_limits<double>::epsilon() * cond_bound);
  return cg_solve(op, rhs, effective, &v);
}

/// One DCA-Like step equals the majorization-minimization update: the linear
/// system's solution minimizes the surrogate U_mu(., v), certified by the
/// surrogate's gradient norm at x+ (the system residual). Test-support.
inline bool mm_equivalence_check(const Embedding& v, const AffinityView& p, double mu,
                                 const CgOptions& cg = {}, double grad_norm_tol = 1e-8) {
  const Embedding grad = grad_f(v);
  const XiMatrix xi = compute_xi(v, p);
  const Embedding x_next = subproblem_solve(v, grad, xi, mu, cg);

  const SparseCoo w = neg_sym_weights(xi);
  const LaplacianOp lap(w);
  const ShiftedLaplacian op(lap, mu);
  const std::size_t n = v.rows();
  std::vector<double> xc(n), yc(n);
  KahanSum norm2;
  for (std::size_t col = 0; col < v.cols(); ++col) {
    for (std::size_t i = 0; i < n; ++i) xc[i] = x_next(i, col);
    op.apply(xc.data(), yc.data());
    for (std::size_t i = 0; i < n; ++i) {
      const double resid = yc[i] - (mu * v(i, col) - grad(i, col));
      norm2.add(resid * resid);
    }
  }
  return std::sqrt(norm2.value()) <= grad_norm_tol;
}

/// Conditional similarities p_{j|i} under a Gaussian kernel with bandwidth
/// sigma_i, computed with max-subtraction. Entry i is zero; the rest sum to 1.
inline std::vector<double> gaussian_conditional(const Matrix& data, std::size_t i, double sigma_i) {
  const std::size_t n = data.rows();
  if (n < 2) throw std::invalid_argument("gaussian_conditional: need at least two points");
  if (i >= n) throw std::invalid_argument("gaussian_conditional: index out of range");
  if (!(sigma_i > 0.0)) throw std::invalid_argument("gaussian_conditional: sigma must be positive");

  std::vector<double> logits(n, 0.0);
  double max_logit = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < n; ++j) {
    if (j == i) continue;
    logits[j] = -squared_distance_rows(data, i, j) / (2.0 * sigma_i * sigma_i);
    max_logit = std::max(max_logit, logits[j]);
  }
  std::vector<double> p(n, 0.0);
  KahanSum denom;
  for (std::size_t j = 0; j < n; ++j) {
    if (j == i) continue;
    p[j] = std::exp(logits[j] - max_logit);
    denom.add(p[j]);
  }
  for (std::size_t j = 0; j < n; ++j)
    if (j != i) p[j] /= denom.value();
  return p;
}

/// Binary kNN affinities: p-bar_ij = 1 iff j is among i's k nearest
/// neighbors or vice versa, normalized by the total over ordered pairs.
inline AffinityMatrix build_knn_affinities(const NeighborList& neighbors, std::size_t n) {
  if (neighbors.size() != n)
    throw std::invalid_argument("build_knn_affinities: neighbor list size mismatch");
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < n; ++i) {
    if (neighbors[i].empty()) throw std::invalid_argument("build_knn_affinities: empty neighbor list");
    for (std::size_t j : neighbors[i]) {
      if (j == i) throw std::invalid_argument("build_knn_affinities: self index in neighbor list");
      if (j >= n) throw std::invalid_argument("build_knn_affinities: neighbor index out of range");
      pairs.emplace_back(std::min(i, j), std::max(i, j));
    }
  }
  std::sort(pairs.begin(), pairs.end());
  pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());

  const double p = 1.0 / (2.0 * static_cast<double>(pairs.size()));
  std::vector<AffinityEntry> entries;
  entries.reserve(pairs.size());
  for (const auto& [a, b] : pairs) entries.push_back({a, b, p});
  return AffinityMatrix(n, entries);
}

/// L = 6 n sqrt(s), a Lipschitz constant of grad f.
inline double lipschitz_bound(std::size_t n, std::size_t s) {
  return 6.0 * static_cast<double>(n) * std::sqrt(static_cast<double>(s));
}

/// t-SNE as a DC problem over an n-by-s embedding. Implements the generic
/// solver contract; the exaggeration factor switches the active P-state
/// (the p log p constant is cached per state).
class TsneProblem {
 public:
  TsneProblem(AffinityMatrix p, std::size_t dims, CgOptions cg = {})
      : p_(std::move(p)), dims_(dims), cg_(cg) {
    if (dims_ == 0) throw std::invalid_argument("TsneProblem: dims must be >= 1");
  }

  std::size_t rows() const { return p_.points(); }
  std::size_t cols() const { return dims_; }
  const AffinityMatrix& affinities() const { return p_; }
  const CgOptions& cg_options() const { return cg_; }

  double exaggeration_factor() const { return factor_; }
  void set_exaggeration_factor(double factor) {
    if (!(factor >= 1.0) || !std::isfinite(factor))
      throw std::invalid_argument("TsneProblem: exaggeration factor must be finite and >= 1");
    factor_ = factor;
  }

  AffinityView active() const { return AffinityView(p_, factor_); }
  double lipschitz_bound() const { return tsne::lipschitz_bound(rows(), cols()); }

  double objective(const Embedding& x) const {
    check_shape(x);
    return (cached_p_log_p() + std::log(pair_normalizer(x))) + composite_objective(x, active());
  }

  double smooth_value(const Embedding& x) const {
    check_shape(x);
    return cached_p_log_p() + std::log(pair_normalizer(x));
  }

  Embedding smooth_grad(const Embedding& x) const {
    check_shape(x);
    return grad_f(x);
  }

  std::vector<double> concave_subgrad(const Embedding& x) const {
    check_shape(x);
    return compute_xi(x, active()).values;
  }

  std::vector<double> composite_value(const Embedding& x) const {
    check_shape(x);
    return tsne::composite_value(x, p_);
  }

  std::vector<double> h_values(const std::vector<double>& g) const {
    if (g.size() != p_.entry_count()) throw std::invalid_argument("h_values: size mismatch");
    const AffinityView view = active();
    std::vector<double> h(g.size());
    for (std::size_t e = 0; e < g.size(); ++e) h[e] = view.p(e) * std::log1p(g[e]);
    return h;
  }

  Embedding subproblem(const Embedding& v, const Embedding& grad, const std::vector<double>& xi,
                       double mu) const {
    check_shape(v);
    if (xi.size() != p_.entry_count()) throw std::invalid_argument("subproblem: xi size mismatch");
    XiMatrix m;
    m.pattern = &p_;
    m.values = xi;
    return subproblem_solve(v, grad, m, mu, cg_);
  }

 private:
  void check_shape(const Embedding& x) const {
    if (x.rows() != rows() || x.cols() != cols())
      throw std::invalid_argument("TsneProblem: embedding shape mismatch");
  }

  double cached_p_log_p() const {
    if (factor_ == 1.0) {
      if (!plain_set_) {
        plain_ = AffinityView(p_, 1.0).sum_p_log_p();
        plain_set_ = true;
      }
      return plain_;
    }
    if (scaled_factor_ != factor_) {
      scaled_ = AffinityView(p_, factor_).sum_p_log_p();
      scaled_factor_ = factor_;
    }
    return scaled_;
  }

  AffinityMatrix p_;
  std::size_t dims_;
  CgOptions cg_;
  double factor_ = 1.0;
  mutable bool plain_set_ = false;
  mutable double plain_ = 0.0;
  mutable double scaled_ = 0.0;
  mutable double scaled_factor_ = 0.0;
};

/// Phase callback wiring an exaggeration schedule into a driver: switches
/// the problem's P-state at the schedule boundary and reports the switch.
inline PhaseCallback exaggeration_phase(TsneProblem& problem, ExaggerationSchedule schedule) {
  schedule.validate();
  return [&problem, schedule](std::size_t k) {
    const double want = schedule.active_at(k) ? schedule.factor : 1.0;
    const bool changed = problem.exaggeration_factor() != want;
    if (changed) problem.set_exaggeration_factor(want);
    return PhaseState{changed, want != 1.0};
  };
}

}  // namespace dclike::tsne
