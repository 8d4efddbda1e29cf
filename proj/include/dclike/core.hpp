#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <stdexcept>
#include <vector>

namespace dclike {

/// Compensated (Kahan-Neumaier) accumulator. Objective and inner-product
/// reductions use it with a fixed traversal order so that results are
/// bit-reproducible across runs and accurate enough for the solver's
/// descent accounting.
class KahanSum {
 public:
  void add(double term) {
    const double t = sum_ + term;
    if (std::abs(sum_) >= std::abs(term)) {
      comp_ += (sum_ - t) + term;
    } else {
      comp_ += (term - t) + sum_;
    }
    sum_ = t;
  }

  [[nodiscard]] double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

/// Dense row-major matrix. Rows index points, columns index coordinates.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    Matrix out(rows.size(), rows.size() ? rows.begin()->size() : 0);
    std::size_t i = 0;
    for (const auto& r : rows) {
      if (r.size() != out.cols_) throw std::invalid_argument("Matrix::from_rows: ragged rows");
      std::size_t j = 0;
      for (double v : r) out(i, j++) = v;
      ++i;
    }
    return out;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  double* row(std::size_t i) { return data_.data() + i * cols_; }
  const double* row(std::size_t i) const { return data_.data() + i * cols_; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  bool same_shape(const Matrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  friend bool operator==(const Matrix& a, const Matrix& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Low-dimensional point configuration, one point per row.
using Embedding = Matrix;

/// neighbors[i] holds the indices of the k nearest points to i, i excluded.
using NeighborList = std::vector<std::vector<std::size_t>>;

inline double squared_distance_rows(const Matrix& x, std::size_t i, std::size_t j) {
  const double* a = x.row(i);
  const double* b = x.row(j);
  double s = 0.0;
  for (std::size_t d = 0; d < x.cols(); ++d) {
    const double diff = a[d] - b[d];
    s += diff * diff;
  }
  return s;
}

inline double frob_norm(const Matrix& a) {
  KahanSum s;
  for (std::size_t idx = 0; idx < a.size(); ++idx) s.add(a.data()[idx] * a.data()[idx]);
  return std::sqrt(s.value());
}

inline double frob_dist(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("frob_dist: shape mismatch");
  KahanSum s;
  for (std::size_t idx = 0; idx < a.size(); ++idx) {
    const double d = a.data()[idx] - b.data()[idx];
    s.add(d * d);
  }
  return std::sqrt(s.value());
}

inline double frob_dot(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("frob_dot: shape mismatch");
  KahanSum s;
  for (std::size_t idx = 0; idx < a.size(); ++idx) s.add(a.data()[idx] * b.data()[idx]);
  return s.value();
}

}  // namespace dclike
