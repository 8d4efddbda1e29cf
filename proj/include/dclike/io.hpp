#pragma once

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <memory>
#include <random>
#include <string>
#include <string_view>

#include "dclike/core.hpp"
#include "dclike/solver.hpp"

namespace dclike {

enum class TableFormat { csv, tsv };

inline TableFormat format_from_path(const std::string& path) {
  return path.size() >= 4 && path.compare(path.size() - 4, 4, ".tsv") == 0 ? TableFormat::tsv
                                                                           : TableFormat::csv;
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

inline bool parse_cell(std::string_view cell, double& out) {
  cell = trim(cell);
  if (cell.empty()) return false;
  if (cell.front() == '+') cell.remove_prefix(1);
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  const auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc{} && ptr == last;
}

/// Seeded standard-normal stream (Box-Muller over mt19937_64). Spelled out
/// rather than std::normal_distribution so the same seed yields the same
/// bits on every platform.
class GaussianSampler {
 public:
  explicit GaussianSampler(std::uint64_t seed) : rng_(seed) {}

  double uniform01() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }  // [0, 1)

  double next() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - uniform01();  // (0, 1]
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

 private:
  std::mt19937_64 rng_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};

}  // namespace detail

/// Rectangular numeric matrix from a CSV/TSV file. A non-numeric first row
/// is treated as a header and skipped; parsing is locale-independent (dot
/// decimal separator); LF and CRLF both accepted; blank lines ignored.
inline Matrix load_matrix(const std::string& path, TableFormat format = TableFormat::csv) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_matrix: cannot open '" + path + "'");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  const char delim = format == TableFormat::csv ? ',' : '\t';
  std::vector<double> values;
  std::size_t rows = 0;
  std::size_t cols = 0;
  bool header_candidate = true;

  std::size_t line_no = 0;
  std::size_t pos = 0;
  std::vector<std::string_view> cells;
  while (pos <= text.size()) {
    const std::size_t eol = text.find('\n', pos);
    std::string_view line(text.data() + pos,
                          (eol == std::string::npos ? text.size() : eol) - pos);
    pos = (eol == std::string::npos) ? text.size() + 1 : eol + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (detail::trim(line).empty()) continue;

    cells.clear();
    std::size_t cell_start = 0;
    while (true) {
      const std::size_t c = line.find(delim, cell_start);
      cells.push_back(line.substr(cell_start, (c == std::string_view::npos ? line.size() : c) -
                                                  cell_start));
      if (c == std::string_view::npos) break;
      cell_start = c + 1;
    }

    if (header_candidate) {
      header_candidate = false;
      bool all_numeric = true;
      double tmp = 0.0;
      for (const auto& cell : cells)
        if (!detail::parse_cell(cell, tmp)) {
          all_numeric = false;
          break;
        }
      if (!all_numeric) continue;  // header row
    }

    if (rows == 0) {
      cols = cells.size();
    } else if (cells.size() != cols) {
      throw std::runtime_error("load_matrix: " + path + ":" + std::to_string(line_no) +
                               ": expected " + std::to_string(cols) + " columns, got " +
                               std::to_string(cells.size()));
    }
    for (const auto& cell : cells) {
      double v = 0.0;
      if (!detail::parse_cell(cell, v))
        throw std::runtime_error("load_matrix: " + path + ":" + std::to_string(line_no) +
                                 ": cannot parse '" + std::string(cell) + "' as a number");
      if (!std::isfinite(v))
        throw std::runtime_error("load_matrix: " + path + ":" + std::to_string(line_no) +
                                 ": non-finite value");
      values.push_back(v);
    }
    ++rows;
  }
  if (rows == 0) throw std::runtime_error("load_matrix: '" + path + "' has no data rows");

  Matrix out(rows, cols);
  std::copy(values.begin(), values.end(), out.data());
  return out;
}

/// Exact brute-force kNN under squared Euclidean distance, ties broken by
/// ascending index.
inline NeighborList knn_graph(const Matrix& data, std::size_t k) {
  const std::size_t n = data.rows();
  if (k < 1 || k >= n) throw std::invalid_argument("knn_graph: require 1 <= k < n");
  NeighborList neighbors(n);
  std::vector<std::pair<double, std::size_t>> cand;
  cand.reserve(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    cand.clear();
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) cand.emplace_back(squared_distance_rows(data, i, j), j);
    std::partial_sort(cand.begin(), cand.begin() + k, cand.end(),
                      [](const auto& a, const auto& b) {
                        return a.first != b.first ? a.first < b.first : a.second < b.second;
                      });
    neighbors[i].reserve(k);
    for (std::size_t m = 0; m < k; ++m) neighbors[i].push_back(cand[m].second);
  }
  return neighbors;
}

/// i.i.d. N(0, 1e-8) entries from a seeded deterministic generator; the same
/// seed reproduces the same bits.
inline Embedding init_embedding(std::size_t n, std::size_t s, std::uint64_t seed) {
  if (n == 0 || s == 0) throw std::invalid_argument("init_embedding: n and s must be >= 1");
  detail::GaussianSampler g(seed);
  Embedding x(n, s);
  for (std::size_t idx = 0; idx < x.size(); ++idx) x.data()[idx] = 1e-4 * g.next();
  return x;
}

namespace detail {

inline void format_double(std::FILE* f, double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  std::fputs(buf, f);
}

inline std::unique_ptr<std::FILE, FileCloser> open_for_write(const std::string& path,
                                                             const char* what) {
  std::unique_ptr<std::FILE, FileCloser> f(std::fopen(path.c_str(), "wb"));
  if (!f) throw std::runtime_error(std::string(what) + ": cannot open '" + path + "'");
  return f;
}

inline void finish_write(std::FILE* f, const std::string& path, const char* what) {
  if (std::ferror(f) || std::fflush(f) != 0)
    throw std::runtime_error(std::string(what) + ": write failed for '" + path + "'");
}

}  // namespace detail

/// One row per point, 17-significant-digit decimals (round-trip exact).
inline void write_embedding(const Embedding& x, const std::string& path) {
  auto f = detail::open_for_write(path, "write_embedding");
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = 0; j < x.cols(); ++j) {
      if (j) std::fputc(',', f.get());
      detail::format_double(f.get(), x(i, j));
    }
    std::fputc('\n', f.get());
  }
  detail::finish_write(f.get(), path, "write_embedding");
}

inline constexpr const char* kTraceHeader =
    "iter,elapsed_sec,objective,mu,step_norm,backtracks,extrapolation_accepted";

inline void write_trace(const IterationTrace& trace, const std::string& path) {
  auto f = detail::open_for_write(path, "write_trace");
  std::fputs(kTraceHeader, f.get());
  std::fputc('\n', f.get());
  for (const auto& row : trace) {
    std::fprintf(f.get(), "%zu,", row.iter);
    detail::format_double(f.get(), row.elapsed_sec);
    std::fputc(',', f.get());
    detail::format_double(f.get(), row.objective);
    std::fputc(',', f.get());
    detail::format_double(f.get(), row.mu);
    std::fputc(',', f.get());
    detail::format_double(f.get(), row.step_norm);
    std::fprintf(f.get(), ",%zu,%d\n", row.backtracks, row.extrapolation_accepted ? 1 : 0);
  }
  detail::finish_write(f.get(), path, "write_trace");
}

/// Gaussian blobs for synthetic benchmarks: cluster centers at
/// N(0, (center_scale * spread)^2), points at N(center, spread^2), clusters
/// assigned round-robin. The default separation keeps neighboring clusters
/// overlapping enough that a k = 10 neighbor graph stays connected, like the
/// benchmark datasets this mimics.
inline Matrix make_clusters(std::size_t n, std::size_t d, std::size_t n_clusters, double spread,
                            std::uint64_t seed, double center_scale = 2.0) {
  if (n == 0 || d == 0 || n_clusters == 0)
    throw std::invalid_argument("make_clusters: n, d and n_clusters must be >= 1");
  detail::GaussianSampler g(seed);
  Matrix centers(n_clusters, d);
  for (std::size_t idx = 0; idx < centers.size(); ++idx)
    centers.data()[idx] = center_scale * spread * g.next();
  Matrix data(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = i % n_clusters;
    for (std::size_t j = 0; j < d; ++j) data(i, j) = centers(c, j) + spread * g.next();
  }
  return data;
}

}  // namespace dclike
