#pragma once

#include <algorithm>
#include <cmath>
#include <vector>
#include <span>

#include "jiio/core/error.hpp"
#include "jiio/core/tensor.hpp"

namespace jiio {

inline double mean_squared_error(std::span<const double> a, std::span<const double> b) {
  check_same_size(a.size(), b.size(), "mse");
  require(!a.empty(), ErrorCode::kInvalidArgument, "mse of empty vectors");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

inline constexpr double kPsnrCap = 99.0;

/// 10·log10(1/MSE) for pixels in [0,1], capped at 99 dB below MSE 1e-10.
inline double psnr(std::span<const double> reference, std::span<const double> estimate) {
  const double mse = mean_squared_error(reference, estimate);
  if (mse < 1e-10) return kPsnrCap;
  return std::min(kPsnrCap, -10.0 * std::log10(mse));
}

/// MSE restricted to the listed coordinates.
inline double masked_mse(std::span<const double> a, std::span<const double> b, std::span<const std::size_t> idx) {
  check_same_size(a.size(), b.size(), "masked mse");
  require(!idx.empty(), ErrorCode::kInvalidArgument, "masked mse over an empty index set");
  double s = 0.0;
  for (auto i : idx) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s / static_cast<double>(idx.size());
}

inline double median(std::vector<double> v) {
  require(!v.empty(), ErrorCode::kInvalidArgument, "median of empty set");
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

}  // namespace jiio
