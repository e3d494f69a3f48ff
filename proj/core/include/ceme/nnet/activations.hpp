#pragma once

#include <cmath>

#include <Eigen/Core>

namespace ceme::nnet {

inline double elu(double x) noexcept { return x >= 0.0 ? x : std::expm1(x); }

inline double elu_derivative(double x) noexcept { return x >= 0.0 ? 1.0 : std::exp(x); }

/// log(1 + exp(x)) without overflow for large |x|.
inline double softplus(double x) noexcept {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

/// d softplus / dx, i.e. the logistic function.
inline double softplus_derivative(double x) noexcept {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// Inverse of softplus for y > 0.
inline double softplus_inverse(double y) noexcept {
  // log(exp(y) - 1) = y + log(1 - exp(-y))
  return y + std::log(-std::expm1(-y));
}

// Branch-free so Eigen vectorises the exp; select() with expm1 falls back to
// scalar code. For x >= 0 the second term is exp(0) - 1 = 0 exactly.
template <typename Derived>
Eigen::ArrayXXd elu(const Eigen::ArrayBase<Derived>& x) {
  return x.max(0.0) + (x.min(0.0).exp() - 1.0);
}

template <typename Derived>
Eigen::ArrayXXd elu_derivative(const Eigen::ArrayBase<Derived>& x) {
  return (x >= 0.0).select(Eigen::ArrayXXd::Ones(x.rows(), x.cols()), x.exp());
}

/// ELU slope recovered from the activation a = elu(x): 1 where x >= 0, a + 1 = exp(x) below.
template <typename Derived>
Eigen::ArrayXXd elu_derivative_from_output(const Eigen::ArrayBase<Derived>& a) {
  return a.min(0.0) + 1.0;
}

template <typename Derived>
Eigen::ArrayXXd softplus(const Eigen::ArrayBase<Derived>& x) {
  return x.max(0.0) + (-x.abs()).exp().log1p();
}

template <typename Derived>
Eigen::ArrayXXd softplus_derivative(const Eigen::ArrayBase<Derived>& x) {
  return 1.0 / (1.0 + (-x).exp());
}

}  // namespace ceme::nnet
