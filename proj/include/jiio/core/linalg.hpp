#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "jiio/core/error.hpp"
#include "jiio/core/rng.hpp"
#include "jiio/core/tensor.hpp"

namespace jiio {

/// LU factorization with partial pivoting, PA = LU stored in place.
class LuFactorization {
 public:
  explicit LuFactorization(Matrix a) : lu_(std::move(a)), perm_(lu_.rows()) {
    if (lu_.rows() != lu_.cols()) throw Error(ErrorCode::kDimensionMismatch, "LU needs a square matrix");
    const std::size_t n = lu_.rows();
    const double threshold = 1e-14 * norm_inf(lu_);
    for (std::size_t i = 0; i < n; ++i) perm_[i] = i;

    for (std::size_t k = 0; k < n; ++k) {
      std::size_t p = k;
      double best = std::abs(lu_(k, k));
      for (std::size_t i = k + 1; i < n; ++i) {
        if (std::abs(lu_(i, k)) > best) {
          best = std::abs(lu_(i, k));
          p = i;
        }
      }
      if (!(best > threshold) || best == 0.0) {
        throw Error(ErrorCode::kSingularMatrix, "pivot " + std::to_string(best) + " at column " + std::to_string(k));
      }
      if (p != k) {
        std::swap(perm_[p], perm_[k]);
        auto rp = lu_.row(p);
        auto rk = lu_.row(k);
        std::swap_ranges(rp.begin(), rp.end(), rk.begin());
      }
      const double pivot = lu_(k, k);
      for (std::size_t i = k + 1; i < n; ++i) {
        const double l = lu_(i, k) / pivot;
        lu_(i, k) = l;
        if (l == 0.0) continue;
        for (std::size_t j = k + 1; j < n; ++j) lu_(i, j) -= l * lu_(k, j);
      }
    }
  }

  std::size_t size() const noexcept { return lu_.rows(); }

  Vector solve(std::span<const double> b) const {
    const std::size_t n = size();
    check_same_size(b.size(), n, "LU solve");
    Vector x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = b[perm_[i]];
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < i; ++j) x[i] -= lu_(i, j) * x[j];
    for (std::size_t ii = n; ii-- > 0;) {
      for (std::size_t j = ii + 1; j < n; ++j) x[ii] -= lu_(ii, j) * x[j];
      x[ii] /= lu_(ii, ii);
    }
    return x;
  }

  /// Solves Aᵀ x = b with the same factors.
  Vector solve_transposed(std::span<const double> b) const {
    const std::size_t n = size();
    check_same_size(b.size(), n, "LU solve_transposed");
    // Aᵀ = Uᵀ Lᵀ P, so solve Uᵀ w = b, Lᵀ y = w, x = Pᵀ y.
    Vector w(b.begin(), b.end());
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < i; ++j) w[i] -= lu_(j, i) * w[j];
      w[i] /= lu_(i, i);
    }
    for (std::size_t ii = n; ii-- > 0;)
      for (std::size_t j = ii + 1; j < n; ++j) w[ii] -= lu_(j, ii) * w[j];
    Vector x(n);
    for (std::size_t i = 0; i < n; ++i) x[perm_[i]] = w[i];
    return x;
  }

 private:
  Matrix lu_;
  std::vector<std::size_t> perm_;
};

inline Vector solve_dense(const Matrix& a, std::span<const double> b) {
  check_same_size(a.rows(), b.size(), "solve_dense");
  return LuFactorization(a).solve(b);
}

/// argmin_γ ‖Aγ − b‖² + λ‖γ‖² through the regularized normal equations.
inline Vector lstsq_ridge(const Matrix& a, std::span<const double> b, double lambda) {
  check_same_size(a.rows(), b.size(), "lstsq_ridge");
  require(lambda >= 0.0, ErrorCode::kInvalidArgument, "ridge must be nonnegative");
  const std::size_t k = a.cols();
  if (k == 0) return {};
  Matrix normal(k, k);
  for (std::size_t r = 0; r < a.rows(); ++r) add_outer(normal, 1.0, a.row(r), a.row(r));
  for (std::size_t i = 0; i < k; ++i) normal(i, i) += lambda;
  return solve_dense(normal, matvec_t(a, b));
}

/// Largest singular value by power iteration on WᵀW.
///
/// Stops once the relative change of the estimate and a geometric estimate of
/// the remaining tail both fall under `tol`, so slowly converging inputs are not
/// accepted early.
inline double spectral_norm(const Matrix& w, int max_iter, double tol, SeededRng& rng) {
  require(frobenius_norm(w) > 0.0, ErrorCode::kZeroWeight, "spectral_norm of a zero matrix");
  Vector v = rng.normal_vector(w.cols());
  double nv = norm2(v);
  while (nv == 0.0) {
    v = rng.normal_vector(w.cols());
    nv = norm2(v);
  }
  for (double& x : v) x /= nv;

  double sigma = 0.0;
  double prev_change = std::numeric_limits<double>::infinity();
  for (int it = 0; it < max_iter; ++it) {
    const Vector u = matvec(w, v);
    const double next = norm2(u);
    Vector wt = matvec_t(w, u);
    const double nw = norm2(wt);
    if (nw == 0.0) {
      // v landed in the null space; restart from a fresh direction.
      v = rng.normal_vector(w.cols());
      const double n0 = norm2(v);
      for (double& x : v) x /= n0;
      continue;
    }
    for (std::size_t i = 0; i < wt.size(); ++i) v[i] = wt[i] / nw;

    const double change = std::abs(next - sigma) / next;
    sigma = next;
    if (it > 0 && change <= tol) {
      const double shrink = prev_change > change ? change / (prev_change - change) : 0.0;
      if (change * shrink <= tol || change == 0.0) return sigma;
    }
    prev_change = change;
  }
  throw Error(ErrorCode::kNoConvergence, "spectral_norm did not settle in " + std::to_string(max_iter) + " iterations");
}

inline double spectral_norm(const Matrix& w) {
  SeededRng rng(0x5eed);
  return spectral_norm(w, 200000, 1e-12, rng);
}

/// Random orthogonal matrix from modified Gram–Schmidt on a Gaussian matrix.
inline Matrix random_orthogonal(std::size_t n, SeededRng& rng) {
  Matrix q = gaussian_matrix(rng, n, n);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t k = 0; k < j; ++k) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += q(i, j) * q(i, k);
      for (std::size_t i = 0; i < n; ++i) q(i, j) -= s * q(i, k);
    }
    double nrm = 0.0;
    for (std::size_t i = 0; i < n; ++i) nrm += q(i, j) * q(i, j);
    nrm = std::sqrt(nrm);
    for (std::size_t i = 0; i < n; ++i) q(i, j) /= nrm;
  }
  return q;
}

}  // namespace jiio
