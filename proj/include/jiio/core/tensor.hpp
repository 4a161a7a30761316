#pragma once

// Dense row-major containers and the handful of BLAS-1/2/3 style kernels the
// rest of the library is written against. Everything is double precision.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "jiio/core/error.hpp"

namespace jiio {

using Vector = std::vector<double>;

inline bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

inline void check_same_size(std::size_t a, std::size_t b, const char* where) {
  if (a != b) {
    throw Error(ErrorCode::kDimensionMismatch,
                std::string(where) + ": " + std::to_string(a) + " vs " + std::to_string(b));
  }
}

// ---------------------------------------------------------------------------
// Vector kernels
// ---------------------------------------------------------------------------

inline double dot(std::span<const double> a, std::span<const double> b) {
  check_same_size(a.size(), b.size(), "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline double norm_inf(std::span<const double> a) {
  double m = 0.0;
  for (double x : a) m = std::max(m, std::abs(x));
  return m;
}

/// y += alpha * x
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  check_same_size(x.size(), y.size(), "axpy");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

inline Vector add(std::span<const double> a, std::span<const double> b) {
  check_same_size(a.size(), b.size(), "add");
  Vector r(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] + b[i];
  return r;
}

inline Vector sub(std::span<const double> a, std::span<const double> b) {
  check_same_size(a.size(), b.size(), "sub");
  Vector r(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] - b[i];
  return r;
}

inline Vector scaled(double s, std::span<const double> a) {
  Vector r(a.begin(), a.end());
  for (double& x : r) x *= s;
  return r;
}

inline Vector hadamard(std::span<const double> a, std::span<const double> b) {
  check_same_size(a.size(), b.size(), "hadamard");
  Vector r(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] * b[i];
  return r;
}

inline Vector concat(std::initializer_list<std::span<const double>> parts) {
  Vector r;
  for (auto p : parts) r.insert(r.end(), p.begin(), p.end());
  return r;
}

// ---------------------------------------------------------------------------
// Matrix
// ---------------------------------------------------------------------------

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    check_same_size(data_.size(), rows * cols, "Matrix(data)");
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  static Matrix diagonal(std::span<const double> d) {
    Matrix m(d.size(), d.size());
    for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  Matrix& operator+=(const Matrix& o) {
    check_same_size(size(), o.size(), "Matrix+=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }
  Matrix& operator-=(const Matrix& o) {
    check_same_size(size(), o.size(), "Matrix-=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
    return *this;
  }
  Matrix& operator*=(double s) {
    for (double& x : data_) x *= s;
    return *this;
  }

  friend Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
  friend Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
  friend Matrix operator*(double s, Matrix a) { return a *= s; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// A x
inline Vector matvec(const Matrix& a, std::span<const double> x) {
  check_same_size(a.cols(), x.size(), "matvec");
  Vector y(a.rows(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const auto r = a.row(i);
    double s = 0.0;
    for (std::size_t j = 0; j < r.size(); ++j) s += r[j] * x[j];
    y[i] = s;
  }
  return y;
}

/// Aᵀ x
inline Vector matvec_t(const Matrix& a, std::span<const double> x) {
  check_same_size(a.rows(), x.size(), "matvec_t");
  Vector y(a.cols(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const auto r = a.row(i);
    const double xi = x[i];
    if (xi == 0.0) continue;
    for (std::size_t j = 0; j < r.size(); ++j) y[j] += r[j] * xi;
  }
  return y;
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  check_same_size(a.cols(), b.rows(), "matmul");
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto ci = c.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      const auto bk = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) ci[j] += aik * bk[j];
    }
  }
  return c;
}

inline Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

/// M += s · a bᵀ
inline void add_outer(Matrix& m, double s, std::span<const double> a, std::span<const double> b) {
  check_same_size(m.rows(), a.size(), "add_outer rows");
  check_same_size(m.cols(), b.size(), "add_outer cols");
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double sa = s * a[i];
    if (sa == 0.0) continue;
    auto r = m.row(i);
    for (std::size_t j = 0; j < b.size(); ++j) r[j] += sa * b[j];
  }
}

/// Aᵀ diag(w) B, the shape every second-order block of the layer takes.
inline Matrix weighted_gram(const Matrix& a, std::span<const double> w, const Matrix& b) {
  check_same_size(a.rows(), w.size(), "weighted_gram");
  check_same_size(b.rows(), w.size(), "weighted_gram");
  Matrix out(a.cols(), b.cols());
  for (std::size_t k = 0; k < w.size(); ++k) {
    if (w[k] == 0.0) continue;
    add_outer(out, w[k], a.row(k), b.row(k));
  }
  return out;
}

inline double frobenius_norm(const Matrix& a) { return norm2(a.data()); }

/// Max absolute row sum.
inline double norm_inf(const Matrix& a) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double s = 0.0;
    for (double x : a.row(i)) s += std::abs(x);
    m = std::max(m, s);
  }
  return m;
}

// ---------------------------------------------------------------------------
// Tensor: shape + flat row-major payload. Used at module boundaries
// (checkpoints, sampling); arithmetic happens on Vector / Matrix.
// ---------------------------------------------------------------------------

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape)
      : shape_(std::move(shape)), data_(element_count(shape_), 0.0) {}
  Tensor(std::vector<std::size_t> shape, std::vector<double> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    check_same_size(data_.size(), element_count(shape_), "Tensor(shape, data)");
    if (!all_finite(data_)) throw Error(ErrorCode::kNonFinite, "Tensor contains NaN/Inf");
  }

  static Tensor from(const Matrix& m) { return Tensor({m.rows(), m.cols()}, {m.data().begin(), m.data().end()}); }
  static Tensor from(std::span<const double> v) { return Tensor({v.size()}, {v.begin(), v.end()}); }

  Matrix to_matrix() const {
    if (shape_.size() != 2) throw Error(ErrorCode::kDimensionMismatch, "Tensor::to_matrix needs rank 2");
    return Matrix(shape_[0], shape_[1], data_);
  }
  Vector to_vector() const {
    if (shape_.size() != 1) throw Error(ErrorCode::kDimensionMismatch, "Tensor::to_vector needs rank 1");
    return data_;
  }

  const std::vector<std::size_t>& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::span<const double> data() const noexcept { return data_; }
  std::span<double> data() noexcept { return data_; }
  std::size_t size() const noexcept { return data_.size(); }

  bool operator==(const Tensor&) const = default;

  static std::size_t element_count(const std::vector<std::size_t>& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
  }

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

}  // namespace jiio
