#pragma once

// Small dense linear algebra: enough for C x C confusion matrices, C x D
// classifier weights and probability vectors. Not meant for large problems.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "asap/error.hpp"

namespace asap {

using Vector = std::vector<double>;

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), entries_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> entries)
      : rows_(rows), cols_(cols), entries_(std::move(entries)) {
    if (entries_.size() != rows_ * cols_) {
      throw StructuralError("matrix: entry count " + std::to_string(entries_.size()) +
                            " does not match " + std::to_string(rows_) + "x" +
                            std::to_string(cols_));
    }
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  static Matrix diagonal(std::span<const double> diag) {
    Matrix m(diag.size(), diag.size());
    for (std::size_t i = 0; i < diag.size(); ++i) m(i, i) = diag[i];
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool square() const noexcept { return rows_ == cols_; }

  double& operator()(std::size_t r, std::size_t c) { return entries_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return entries_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {entries_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {entries_.data() + r * cols_, cols_}; }

  std::span<double> entries() noexcept { return entries_; }
  std::span<const double> entries() const noexcept { return entries_; }

  double trace() const {
    double t = 0.0;
    for (std::size_t i = 0; i < std::min(rows_, cols_); ++i) t += (*this)(i, i);
    return t;
  }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> entries_;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw StructuralError("dot: length mismatch");
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline double sum(std::span<const double> a) { return std::accumulate(a.begin(), a.end(), 0.0); }

inline double l1_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw StructuralError("l1_distance: length mismatch");
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d += std::abs(a[i] - b[i]);
  return d;
}

inline std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::distance(v.begin(), std::max_element(v.begin(), v.end())));
}

inline Vector multiply(const Matrix& m, std::span<const double> v) {
  if (m.cols() != v.size()) {
    throw StructuralError("multiply: matrix has " + std::to_string(m.cols()) +
                          " columns, vector has " + std::to_string(v.size()) + " entries");
  }
  Vector out(m.rows(), 0.0);
  for (std::size_t r = 0; r < m.rows(); ++r) out[r] = dot(m.row(r), v);
  return out;
}

inline Matrix multiply(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw StructuralError("multiply: inner dimensions differ");
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aik * b(k, j);
    }
  }
  return out;
}

inline Matrix transpose(const Matrix& m) {
  Matrix t(m.cols(), m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) t(j, i) = m(i, j);
  return t;
}

inline double max_abs(std::span<const double> v) {
  double best = 0.0;
  for (double x : v) best = std::max(best, std::abs(x));
  return best;
}

// (m + lambda * I)^{-1} by Gauss-Jordan elimination with partial pivoting.
inline Matrix invert_ridge(const Matrix& m, double lambda) {
  if (!m.square()) {
    throw StructuralError("invert_ridge: matrix is " + std::to_string(m.rows()) + "x" +
                          std::to_string(m.cols()) + ", expected square");
  }
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw StructuralError("invert_ridge: lambda must be finite and non-negative");
  }
  const std::size_t n = m.rows();
  Matrix a = m;
  for (std::size_t i = 0; i < n; ++i) a(i, i) += lambda;
  Matrix inv = Matrix::identity(n);

  const double scale = std::max(max_abs(a.entries()), std::numeric_limits<double>::min());
  const double tiny = static_cast<double>(n) * std::numeric_limits<double>::epsilon() * scale;

  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < n; ++r) {
      if (std::abs(a(r, col)) > std::abs(a(pivot, col))) pivot = r;
    }
    if (std::abs(a(pivot, col)) <= tiny) {
      throw SingularityError("invert_ridge: matrix is singular (column " + std::to_string(col) +
                             ")");
    }
    if (pivot != col) {
      std::swap_ranges(a.row(col).begin(), a.row(col).end(), a.row(pivot).begin());
      std::swap_ranges(inv.row(col).begin(), inv.row(col).end(), inv.row(pivot).begin());
    }
    const double p = a(col, col);
    for (std::size_t j = 0; j < n; ++j) {
      a(col, j) /= p;
      inv(col, j) /= p;
    }
    for (std::size_t r = 0; r < n; ++r) {
      if (r == col) continue;
      const double f = a(r, col);
      if (f == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) {
        a(r, j) -= f * a(col, j);
        inv(r, j) -= f * inv(col, j);
      }
    }
  }
  return inv;
}

// Scale-aware ridge floor for confusion matrices: 1e-6 * trace / C.
inline double default_ridge(const Matrix& m) {
  if (!m.square() || m.rows() == 0) throw StructuralError("default_ridge: expected square matrix");
  return 1e-6 * m.trace() / static_cast<double>(m.rows());
}

inline bool on_simplex(std::span<const double> v, double tol = 1e-12) {
  if (v.empty()) return false;
  for (double x : v) {
    if (!(x >= 0.0)) return false;
  }
  return std::abs(sum(v) - 1.0) <= tol;
}

// Euclidean projection onto the probability simplex (sort-based, O(n log n)).
// Inputs already on the simplex are returned unchanged.
inline Vector project_simplex(std::span<const double> v) {
  if (v.empty()) throw StructuralError("project_simplex: empty input");
  for (double x : v) {
    if (!std::isfinite(x)) throw StructuralError("project_simplex: non-finite input");
  }
  if (on_simplex(v)) return Vector(v.begin(), v.end());

  Vector u(v.begin(), v.end());
  std::sort(u.begin(), u.end(), std::greater<>());
  // The largest entry always stays in the support; testing it would fail to
  // rounding once |u[0]| dwarfs 1.
  double running = u[0];
  double theta = u[0] - 1.0;
  for (std::size_t j = 1; j < u.size(); ++j) {
    running += u[j];
    const double candidate = (running - 1.0) / static_cast<double>(j + 1);
    if (u[j] - candidate > 0.0) theta = candidate;
  }
  Vector out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = std::max(v[i] - theta, 0.0);
  // Huge inputs leave rounding error of order |u[0]| * eps in the result.
  const double total = sum(out);
  if (std::abs(total - 1.0) > 1e-12) {
    if (total > 0.0) {
      for (double& x : out) x /= total;
    } else {
      std::ranges::fill(out, 0.0);
      out[static_cast<std::size_t>(std::ranges::max_element(v) - v.begin())] = 1.0;
    }
  }
  return out;
}

// 1 - <a,b> / (|a| |b|).
inline double cosine_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw StructuralError("cosine_distance: length mismatch");
  const double na = norm2(a);
  const double nb = norm2(b);
  if (na == 0.0 || nb == 0.0) throw DegenerateInputError("cosine_distance: zero-norm input");
  return 1.0 - dot(a, b) / (na * nb);
}

}  // namespace asap
