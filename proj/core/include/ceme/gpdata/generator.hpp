#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "ceme/data.hpp"
#include "ceme/gpdata/gp.hpp"

namespace ceme::gpdata {

struct GeneratorOptions {
  SqExpKernel kernel{};
  int grid_points_1d = 1000;
  int grid_points_per_axis_2d = 31;  // 961 points for mu_Y
  GridPadding padding{};
  double base_jitter = 1e-8;
};

/// Ground-truth SCM of a synthetic dataset: mu_X*(z), softplus-linked
/// sigma_X*(z), mu_Y(z, x*) and the two noise scales.
class SyntheticTruth final : public CausalTruth {
 public:
  SyntheticTruth() = default;
  SyntheticTruth(GpFunction mu_xstar, GpFunction sigma_xstar_raw, GpFunction mu_y, double tau, double sigma,
                 double noise_level, std::uint64_t seed);

  double mu_xstar(double z) const;
  double sigma_xstar(double z) const;
  double mu_y(double z, double x_star) const;
  Eigen::VectorXd mu_y(const Eigen::MatrixXd& z, const Eigen::VectorXd& x_star) const override;
  double sigma() const override { return sigma_; }
  double tau() const override { return tau_; }
  bool standard_normal_covariate() const override { return true; }

  double noise_level() const noexcept { return noise_level_; }
  std::uint64_t seed() const noexcept { return seed_; }
  const GpFunction& mu_xstar_function() const noexcept { return mu_xstar_; }
  const GpFunction& sigma_xstar_raw_function() const noexcept { return sigma_raw_; }
  const GpFunction& mu_y_function() const noexcept { return mu_y_; }

 private:
  GpFunction mu_xstar_;
  GpFunction sigma_raw_;
  GpFunction mu_y_;
  double tau_ = 0.0;
  double sigma_ = 0.0;
  double noise_level_ = 0.0;
  std::uint64_t seed_ = 0;
};

struct SyntheticBundle {
  std::shared_ptr<const SyntheticTruth> truth;
  std::vector<Dataset> splits;  // in the order the sizes were requested
};

/// Runs the synthetic generation algorithm for several i.i.d. samples that
/// share one truth draw. Grids cover all samples; tau and sigma come from the
/// first sample (the training split).
SyntheticBundle generate_samples(const std::vector<Eigen::Index>& sizes, double noise_level, std::uint64_t seed,
                                 const GeneratorOptions& options = {});

/// Single dataset; the truth is returned through `truth` when non-null.
Dataset generate_dataset(Eigen::Index n, double noise_level, std::uint64_t seed, const GeneratorOptions& options = {},
                         std::shared_ptr<const SyntheticTruth>* truth = nullptr);

/// Train/validation/test triple drawn from one truth.
SyntheticBundle dataset_bundle(Eigen::Index n_train, Eigen::Index n_val, Eigen::Index n_test, double noise_level,
                               std::uint64_t seed, const GeneratorOptions& options = {});

/// JSON checkpoint of a truth ("ceme-gp-truth-v1"); doubles are written with
/// round-trip precision so reloaded functions evaluate bit-identically.
std::string to_checkpoint(const SyntheticTruth& truth);
SyntheticTruth synthetic_truth_from_checkpoint(std::string_view text);

}  // namespace ceme::gpdata
