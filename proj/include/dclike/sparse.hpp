#pragma once

#include <algorithm>
#include <cstdio>
#include <string>

#include "dclike/core.hpp"

namespace dclike {

struct Triplet {
  std::size_t row = 0;
  std::size_t col = 0;
  double value = 0.0;
};

/// Square sparse matrix in sorted coordinate format. Duplicate coordinates
/// are summed on construction; the stored list is deduplicated and ordered
/// row-major, which fixes the traversal order of every product.
class SparseCoo {
 public:
  SparseCoo() = default;

  SparseCoo(std::size_t n, std::vector<Triplet> entries) : n_(n), entries_(std::move(entries)) {
    for (const auto& e : entries_) {
      if (e.row >= n_ || e.col >= n_) throw std::invalid_argument("SparseCoo: index out of range");
      if (!std::isfinite(e.value)) throw std::invalid_argument("SparseCoo: non-finite value");
    }
    std::sort(entries_.begin(), entries_.end(), [](const Triplet& a, const Triplet& b) {
      return a.row != b.row ? a.row < b.row : a.col < b.col;
    });
    std::size_t out = 0;
    for (std::size_t idx = 0; idx < entries_.size(); ++idx) {
      if (out > 0 && entries_[out - 1].row == entries_[idx].row &&
          entries_[out - 1].col == entries_[idx].col) {
        entries_[out - 1].value += entries_[idx].value;
      } else {
        entries_[out++] = entries_[idx];
      }
    }
    entries_.resize(out);
  }

  std::size_t size() const { return n_; }
  const std::vector<Triplet>& entries() const { return entries_; }

 private:
  std::size_t n_ = 0;
  std::vector<Triplet> entries_;
};

/// Graph-Laplacian operator of a weight matrix A:
///   (L_A)_ij = -A_ij for i != j,   (L_A)_ii = -A_ii + sum_l A_il.
/// For symmetric A with non-negative off-diagonal and zero diagonal, L_A 1 = 0
/// and L_A is positive semidefinite. Holds a view of A; A must outlive it.
class LaplacianOp {
 public:
  explicit LaplacianOp(const SparseCoo& a) : a_(&a), row_sum_(a.size(), 0.0) {
    for (const auto& e : a.entries()) row_sum_[e.row] += e.value;
  }

  std::size_t size() const { return a_->size(); }

  // y = L x, single row-major pass.
  void apply(const double* x, double* y) const {
    const std::size_t n = size();
    for (std::size_t i = 0; i < n; ++i) y[i] = row_sum_[i] * x[i];
    for (const auto& e : a_->entries()) y[e.row] -= e.value * x[e.col];
  }

 private:
  const SparseCoo* a_;
  std::vector<double> row_sum_;
};

inline LaplacianOp laplacian(const SparseCoo& a) { return LaplacianOp(a); }

/// Subproblem system operator 2 L + mu I. SPD for non-negative symmetric
/// weights and mu > 0.
class ShiftedLaplacian {
 public:
  ShiftedLaplacian(const LaplacianOp& lap, double mu) : lap_(&lap), mu_(mu) {
    if (!(mu > 0.0)) throw std::invalid_argument("ShiftedLaplacian: mu must be positive");
  }

  std::size_t size() const { return lap_->size(); }
  double shift() const { return mu_; }

  void apply(const double* x, double* y) const {
    lap_->apply(x, y);
    const std::size_t n = size();
    for (std::size_t i = 0; i < n; ++i) y[i] = 2.0 * y[i] + mu_ * x[i];
  }

 private:
  const LaplacianOp* lap_;
  double mu_;
};

struct CgOptions {
  double tol = 1e-10;        // relative residual per right-hand side
  std::size_t max_iter = 0;  // 0 means 10 * n
};

namespace detail {
inline double dot_n(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}
}  // namespace detail

/// Conjugate gradient for (2L + mu I) X = B, one shared system matrix and one
/// right-hand side per column of B. Solutions meet the relative residual
/// `tol` per column or the call throws; convergence claimed by the residual
/// recurrence is re-verified against the true residual before returning.
inline Matrix cg_solve(const ShiftedLaplacian& op, const Matrix& b, const CgOptions& opts = {},
                       const Matrix* guess = nullptr) {
  const std::size_t n = op.size();
  if (b.rows() != n) throw std::invalid_argument("cg_solve: dimension mismatch");
  if (guess && !guess->same_shape(b)) throw std::invalid_argument("cg_solve: guess shape mismatch");
  if (!(opts.tol > 0.0)) throw std::invalid_argument("cg_solve: tol must be positive");
  const std::size_t cap = opts.max_iter ? opts.max_iter : 10 * n;

  Matrix x = guess ? *guess : Matrix(b.rows(), b.cols());
  std::vector<double> bc(n), xc(n), r(n), p(n), ap(n);

  for (std::size_t col = 0; col < b.cols(); ++col) {
    for (std::size_t i = 0; i < n; ++i) {
      bc[i] = b(i, col);
      xc[i] = x(i, col);
    }
    const double bnorm2 = detail::dot_n(bc.data(), bc.data(), n);
    if (bnorm2 == 0.0) {
      for (std::size_t i = 0; i < n; ++i) x(i, col) = 0.0;
      continue;
    }
    const double target2 = opts.tol * opts.tol * bnorm2;

    op.apply(xc.data(), r.data());
    for (std::size_t i = 0; i < n; ++i) r[i] = bc[i] - r[i];
    double rs = detail::dot_n(r.data(), r.data(), n);
    p = r;

    std::size_t used = 0;
    bool converged = rs <= target2;  // initial r is the true residual
    while (!converged) {
      if (used >= cap) {
        char buf[128];
        std::snprintf(buf, sizeof buf,
                      "cg_solve: no convergence within %zu iterations (rel residual %.3e)", cap,
                      std::sqrt(rs / bnorm2));
        throw std::runtime_error(buf);
      }
      op.apply(p.data(), ap.data());
      const double pap = detail::dot_n(p.data(), ap.data(), n);
      if (!(pap > 0.0)) throw std::runtime_error("cg_solve: operator is not positive definite");
      const double alpha = rs / pap;
      for (std::size_t i = 0; i < n; ++i) {
        xc[i] += alpha * p[i];
        r[i] -= alpha * ap[i];
      }
      ++used;
      const double rs_next = detail::dot_n(r.data(), r.data(), n);
      if (rs_next <= target2) {
        // Recurrence says converged; confirm with the true residual and
        // restart from it if the recurrence drifted.
        op.apply(xc.data(), ap.data());
        for (std::size_t i = 0; i < n; ++i) ap[i] = bc[i] - ap[i];
        const double true2 = detail::dot_n(ap.data(), ap.data(), n);
        if (true2 <= target2) {
          converged = true;
          break;
        }
        r = ap;
        rs = true2;
        p = r;
        continue;
      }
      const double beta = rs_next / rs;
      for (std::size_t i = 0; i < n; ++i) p[i] = r[i] + beta * p[i];
      rs = rs_next;
    }
    for (std::size_t i = 0; i < n; ++i) x(i, col) = xc[i];
  }
  return x;
}

}  // namespace dclike
