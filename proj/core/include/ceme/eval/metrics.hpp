#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>

#include <Eigen/Core>

#include "ceme/data.hpp"
#include "ceme/scm/model.hpp"

namespace ceme::eval {

/// sqrt(mean((estimate - truth)^2)).
double rmse(const Eigen::VectorXd& estimate, const Eigen::VectorXd& truth);

/// (estimate - truth) / truth, signed. Throws ConfigError unless truth > 0.
double rel_error(double estimate, double truth);

/// Which treatment column a Naive model receives when its mu_Y is scored.
enum class NaiveInput {
  observed,  // x, the column it was trained on (default)
  true_treatment,
};

/// RMSE of the fitted mu_Y against the true mu_Y(z, x*) over the test rows.
double rmse_mu_y(const scm::FittedModel& model, const CausalTruth& truth, const Dataset& test,
                 NaiveInput naive_input = NaiveInput::observed);

struct QuadratureOptions {
  int z_nodes = 401;
  double z_bound = 6.0;  // nodes span [-z_bound, z_bound]
};

/// p(y | do(x*)) under the truth. Scalar standard-normal z: trapezoid over
/// the z nodes. Otherwise Monte Carlo over the columns of `z_sample`.
Eigen::VectorXd truth_interventional_density(const CausalTruth& truth, double x_star, const Eigen::VectorXd& y_grid,
                                             const QuadratureOptions& quad = {},
                                             const Eigen::MatrixXd* z_sample = nullptr);

/// Density of Y under do(x*) evaluated at the points in the second argument.
using DensityFn = std::function<Eigen::VectorXd(double, const Eigen::VectorXd&)>;

struct AidOptions {
  int n_treatment = 500;   // test x* values averaged over (the first rows of the test set)
  int n_y = 2000;          // uniform y draws per x*
  double range_pad = 0.25; // y range = [min y, max y] widened by this fraction of its width per side
  std::uint64_t seed = 0;
};

struct AidResult {
  double value = 0.0;
  double y_min = 0.0;
  double y_max = 0.0;
  int n_treatment = 0;
};

/// Average over x* of the L1 distance between two interventional densities,
/// each inner integral estimated from uniform y draws on [y_min, y_max].
/// x* value t uses the stream derive_seed(seed, "aid<t>").
double average_interventional_distance(const DensityFn& model, const DensityFn& truth,
                                       const Eigen::VectorXd& x_star_values, double y_min, double y_max,
                                       int n_y, std::uint64_t seed);

/// AID of a fitted model on a test set: x* values and the y range come from
/// the test data, the model density averages over all test z.
AidResult aid(const scm::FittedModel& model, const CausalTruth& truth, const Dataset& test,
              const AidOptions& options = {}, const QuadratureOptions& quad = {});

struct EvalOptions {
  AidOptions aid{};
  QuadratureOptions quadrature{};
  NaiveInput naive_input = NaiveInput::observed;
};

struct MetricReport {
  std::string variant;
  double rmse_mu_y = 0.0;
  std::optional<double> rel_err_sigma;  // absent when the true sigma is zero
  std::optional<double> rel_err_tau;    // only CEME learns tau
  std::optional<double> aid;            // absent when either density is degenerate
  long n_test = 0;
  // quadrature metadata
  double y_min = 0.0;
  double y_max = 0.0;
  int n_y = 0;
  int n_treatment = 0;
  long z_sample_size = 0;
  std::string truth_integration;  // "trapezoid" or "monte_carlo"
  int z_nodes = 0;
  double z_bound = 0.0;
  std::uint64_t eval_seed = 0;
};

/// Per-row predictions behind a report's RMSE.
struct Predictions {
  Eigen::VectorXd model_mu_y;
  Eigen::VectorXd truth_mu_y;
};

MetricReport evaluate(const scm::FittedModel& model, const CausalTruth& truth, const Dataset& test,
                      const EvalOptions& options = {}, Predictions* predictions = nullptr);

std::string to_json(const MetricReport& report);
MetricReport metric_report_from_json(std::string_view text);

/// `model_mu_y,truth_mu_y` per test row.
std::string predictions_csv(const Predictions& p);
Predictions predictions_from_csv(std::string_view text);

}  // namespace ceme::eval
