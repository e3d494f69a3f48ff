#pragma once

#include <span>

#include <Eigen/Core>

#include "ceme/random.hpp"

namespace ceme::gpdata {

/// k(u1, u2) = alpha * exp(-|u1 - u2|^2 / (2 l^2)).
struct SqExpKernel {
  double alpha = 1.0;
  double lengthscale = 2.0;

  double operator()(std::span<const double> u1, std::span<const double> u2) const;

  /// Gram/cross matrix between point sets stored one point per column.
  Eigen::MatrixXd cross(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) const;
};

/// Deterministic function obtained by drawing a GP at grid points and taking
/// the noiseless posterior mean f(t) = prior_mean + k(t, grid) w.
class GpFunction {
 public:
  GpFunction() = default;
  GpFunction(SqExpKernel kernel, double prior_mean, Eigen::MatrixXd grid, Eigen::VectorXd grid_values,
             Eigen::VectorXd coefficients, double jitter);

  /// Draws grid values jointly from GP(prior_mean, k) and solves for the
  /// interpolation weights by Cholesky. Jitter starts at `base_jitter * alpha`
  /// and grows x100 at most twice; throws GenerationError if all attempts fail.
  ///
  /// The stored grid values are the posterior mean at the grid, i.e. the draw
  /// with its jitter-sized component projected out, so `evaluate` reproduces
  /// them to rounding.
  static GpFunction sample(const SqExpKernel& kernel, double prior_mean, Eigen::MatrixXd grid, Rng& rng,
                           double base_jitter = 1e-8);

  double evaluate(std::span<const double> point) const;
  /// One point per column.
  Eigen::VectorXd evaluate(const Eigen::MatrixXd& points) const;

  int dimension() const noexcept { return static_cast<int>(grid_.rows()); }
  const SqExpKernel& kernel() const noexcept { return kernel_; }
  double prior_mean() const noexcept { return prior_mean_; }
  const Eigen::MatrixXd& grid() const noexcept { return grid_; }
  const Eigen::VectorXd& grid_values() const noexcept { return values_; }
  const Eigen::VectorXd& coefficients() const noexcept { return coefficients_; }
  double jitter() const noexcept { return jitter_; }
  /// Largest |raw draw - stored value| over the grid.
  double projection_residual() const noexcept { return projection_residual_; }

 private:
  SqExpKernel kernel_;
  double prior_mean_ = 0.0;
  Eigen::MatrixXd grid_;
  Eigen::VectorXd values_;
  Eigen::VectorXd coefficients_;
  double jitter_ = 0.0;
  double projection_residual_ = 0.0;
};

struct GridPadding {
  double low = 0.25;
  double high = 0.25;
};

/// `count` evenly spaced values spanning
/// [min - pad.low * range, max + pad.high * range], range = max - min.
Eigen::VectorXd make_grid(double data_min, double data_max, int count, GridPadding pad = {});

/// Cartesian grid over the padded bounding box of two coordinates,
/// `per_axis`^2 points, one per column (row 0 = first coordinate).
Eigen::MatrixXd make_grid_2d(const Eigen::VectorXd& first, const Eigen::VectorXd& second, int per_axis,
                             GridPadding pad = {});

}  // namespace ceme::gpdata
