#pragma once

// Eigen conversions and small instance generators shared by the unit tests.

#include <Eigen/Dense>

#include "jiio/all.hpp"

namespace oracle {

inline Eigen::MatrixXd to_eigen(const jiio::Matrix& m) {
  Eigen::MatrixXd e(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) e(i, j) = m(i, j);
  return e;
}

inline Eigen::VectorXd to_eigen(std::span<const double> v) {
  Eigen::VectorXd e(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) e(i) = v[i];
  return e;
}

inline jiio::Vector from_eigen(const Eigen::VectorXd& e) { return jiio::Vector(e.data(), e.data() + e.size()); }

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline double largest_singular_value(const jiio::Matrix& m) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(to_eigen(m));
  return svd.singularValues()(0);
}

inline jiio::Model random_model(jiio::Activation kind, std::size_t n, std::size_t d, std::size_t p, double gamma,
                                std::uint64_t seed, double input_scale = 1.0, double bias_scale = 0.1) {
  jiio::SeededRng rng(seed);
  return jiio::Model::random(kind, n, d, p, gamma, rng, input_scale, bias_scale);
}

}  // namespace oracle
