#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "ceme/data.hpp"
#include "ceme/nnet/mlp.hpp"
#include "ceme/vi/config.hpp"
#include "ceme/vi/trainer.hpp"

namespace ceme::semisynth {

/// Which CSV columns play which role.
struct TabularSpec {
  std::vector<std::string> covariate_columns;
  std::string treatment_column;
  std::string outcome_column;
  bool log_outcome = false;  // take log(y) before standardising
  std::size_t rows = 0;      // filled in by cleaning
};

/// Education-wage layout: treatment `educ`, outcome `lwage` (already a log),
/// and the 23 covariates left after removing parental schooling, IQ, KWW,
/// experience, wage, the sampling weight and `black`.
TabularSpec card_default_spec();

/// Cells treated as missing: "", "NA", "NaN", "nan", ".".
bool is_missing(std::string_view cell);

struct CleanedTable {
  TabularSpec spec;
  Eigen::MatrixXd z;       // (covariates, rows), standardised
  Eigen::VectorXd x_star;  // standardised treatment
  Eigen::VectorXd y;       // standardised (log) outcome
  std::vector<std::size_t> kept_rows;  // 0-based data-row index in the input
  std::size_t dropped = 0;
};

/// Drops every row with a missing value in a used column, then standardises
/// the covariates, treatment and outcome to mean 0 and sample sd 1.
/// Throws IoError for absent columns or non-numeric cells, ConfigError for a
/// zero-variance column (the message names it) or an empty table.
CleanedTable clean_and_standardize(std::string_view csv_text, TabularSpec spec, std::string_view source = "table");
CleanedTable clean_and_standardize_file(const std::filesystem::path& csv, TabularSpec spec);

/// mu_Y given by a fitted network on inputs (z, x*). Covariates are not
/// scalar standard normal, so truth densities average over a z sample.
class NetworkTruth final : public CausalTruth {
 public:
  NetworkTruth(nnet::Mlp net, double sigma, double tau);

  Eigen::VectorXd mu_y(const Eigen::MatrixXd& z, const Eigen::VectorXd& x_star) const override;
  double sigma() const override { return sigma_; }
  double tau() const override { return tau_; }
  bool standard_normal_covariate() const override { return false; }

  const nnet::Mlp& network() const { return net_; }

 private:
  nnet::Mlp net_;
  double sigma_;
  double tau_;
};

/// JSON "ceme-network-truth-v1".
std::string to_checkpoint(const NetworkTruth& truth);
NetworkTruth network_truth_from_checkpoint(std::string_view text);

/// Five hidden layers of 30, weight decay 0.01, otherwise the
/// education-wage optimiser settings.
vi::TrainConfig outcome_training_defaults();

struct OutcomeConfig {
  vi::TrainConfig train = outcome_training_defaults();
  double noise_fraction = 0.1;  // Delta_Y sd relative to the fit's residual sd
};

struct SyntheticOutcome {
  Eigen::VectorXd y;  // network output plus noise
  Eigen::VectorXd mean;  // network output alone
  nnet::Mlp network;
  double residual_sd = 0.0;  // sd of y_real - network
  double delta_y_sd = 0.0;
  vi::RunRecord record;
};

/// Fits y_real on (z, x*) over all rows (the same rows serve as validation
/// data) and draws y = net(z, x*) + N(0, delta_y_sd^2) from `seed`.
/// Throws Error when training diverges.
SyntheticOutcome make_synthetic_outcome(const Eigen::MatrixXd& z, const Eigen::VectorXd& x_star,
                                        const Eigen::VectorXd& y_real, const OutcomeConfig& cfg, std::uint64_t seed);

/// x = x* + rho * sd(x*) * N(0,1) per level. Each level draws from
/// derive_seed(seed, "noise" + shortest decimal of rho), so adding a level
/// leaves the others untouched. rho = 0 returns x* itself.
std::vector<Eigen::VectorXd> inject_treatment_noise(const Eigen::VectorXd& x_star, const std::vector<double>& levels,
                                                    std::uint64_t seed);

/// Nearest-integer sizes of fraction * n; the rounding remainder goes to the
/// largest split. Throws ConfigError if fractions are not positive and
/// summing to 1, or if n is smaller than the number of splits.
std::vector<Eigen::Index> split_sizes(Eigen::Index n, const std::vector<double>& fractions);

/// Shuffled partition of 0..n-1 with split_sizes(n, fractions).
std::vector<std::vector<Eigen::Index>> split_indices(Eigen::Index n, const std::vector<double>& fractions,
                                                     std::uint64_t seed);

struct BuildConfig {
  std::vector<double> levels{0.0, 0.2, 0.4, 0.6, 0.8, 1.0};
  std::vector<double> fractions{0.72, 0.08, 0.20};
  OutcomeConfig outcome{};
  std::uint64_t seed = 0;
};

struct LevelData {
  double level = 0.0;
  double tau = 0.0;  // level * sd(x*)
  Dataset train, val, test;
};

struct Benchmark {
  CleanedTable table;
  SyntheticOutcome outcome;
  std::vector<std::vector<Eigen::Index>> split;  // train, val, test
  std::vector<LevelData> levels;
  double sd_x_star = 0.0;
  std::uint64_t seed = 0;

  /// Truth for one level: the outcome network, delta_y_sd and that level's tau.
  NetworkTruth truth(std::size_t level) const;
};

/// Outcome stream "outcome", split stream "split", noise streams as above.
Benchmark build_benchmark(CleanedTable table, const BuildConfig& cfg);

/// Directory name for a level, e.g. "rho_0.40".
std::string level_directory(double level);

/// Writes <out>/<level_directory>/{train,val,test}.csv, truth.json and
/// manifest.json for every level. Returns the level directories.
std::vector<std::filesystem::path> write_benchmark(const Benchmark& b, const std::filesystem::path& out);

/// Tabular demo data shaped like the education-wage table: covariates
/// c1..c<covariates> (odd ones Gaussian, even ones 0/1), an integer-valued
/// treatment `educ`, a log-wage outcome `lwage` and an unused column `iq`
/// that is sometimes "NA". Holds n complete rows plus `missing` extra rows
/// with an "NA" in a used column. Deterministic in `seed`.
std::string standin_table_csv(std::size_t n, int covariates, std::size_t missing, std::uint64_t seed);

}  // namespace ceme::semisynth
