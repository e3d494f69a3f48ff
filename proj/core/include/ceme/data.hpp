#pragma once

#include <filesystem>
#include <span>

#include <Eigen/Core>

namespace ceme {

/// Aligned observations. Covariates are stored one column per row of data so
/// they can be fed to the networks without transposition.
struct Dataset {
  Eigen::MatrixXd z;       // (covariate_dim, n)
  Eigen::VectorXd x_star;  // true treatment; empty when unobserved
  Eigen::VectorXd x;       // noisy treatment
  Eigen::VectorXd y;       // outcome

  Eigen::Index size() const noexcept { return x.size(); }
  int covariate_dim() const noexcept { return static_cast<int>(z.rows()); }
  bool has_x_star() const noexcept { return x_star.size() == x.size() && x.size() > 0; }

  /// Throws ShapeError unless all arrays are aligned.
  void validate() const;

  Dataset subset(std::span<const Eigen::Index> rows) const;
};

/// Writes `z,x_star,x,y` (scalar covariate) or `z_1,...,z_d,x_star,x,y`.
/// Values use the shortest round-trip decimal representation.
void write_csv(const std::filesystem::path& path, const Dataset& data);
Dataset read_csv(const std::filesystem::path& path);

/// Ground truth of a data-generating process, used by the metrics.
class CausalTruth {
 public:
  virtual ~CausalTruth() = default;

  /// E[Y | z, do(x*)] for each column of `z` paired with `x_star`.
  virtual Eigen::VectorXd mu_y(const Eigen::MatrixXd& z, const Eigen::VectorXd& x_star) const = 0;
  virtual double sigma() const = 0;
  virtual double tau() const = 0;
  /// True when Z is a scalar with a standard normal law, so p(y|do(x*)) can be
  /// integrated over z by quadrature rather than by Monte Carlo.
  virtual bool standard_normal_covariate() const = 0;
};

/// Unbiased sample standard deviation.
double sample_sd(const Eigen::Ref<const Eigen::VectorXd>& v);
double sample_mean(const Eigen::Ref<const Eigen::VectorXd>& v);

}  // namespace ceme
