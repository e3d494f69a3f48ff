#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ceme/data.hpp"
#include "ceme/scm/model.hpp"
#include "ceme/vi/config.hpp"

namespace ceme::vi {

enum class StopReason { zero_budget, early_stopping, max_epochs, diverged };
std::string_view to_string(StopReason r);

struct RunRecord {
  std::vector<double> train_loss;        // per epoch
  std::vector<double> validation_score;  // per epoch; lower is better
  std::vector<double> learning_rate;     // rate used during each epoch
  double initial_validation_score = 0.0;
  double best_validation_score = 0.0;  // min over the initial score and the series
  int best_epoch = -1;                 // -1: the initial model was never beaten
  StopReason stop_reason = StopReason::zero_budget;
  bool failed = false;
  std::string failure_message;
  int recoveries = 0;  // non-finite losses survived by restoring and cutting the rate
  std::uint64_t seed = 0;
  double wall_seconds = 0.0;  // logged only, never serialised
};

/// JSON with the full epoch history. Wall time is left out so the file is reproducible.
std::string to_json(const RunRecord& record);
RunRecord run_record_from_json(std::string_view text);

/// Linear from cfg.initial_term_weight at epoch 0 to 1 at cfg.anneal_epochs, then 1.
double anneal_weight(int epoch, const TrainConfig& cfg);

/// Negative mean IW-ELBO (beta = 1, K = cfg.n_importance_samples) with noise
/// drawn from `eval_seed`, so repeated calls on the same model agree.
double ceme_validation_score(const scm::CemeModel& model, const Dataset& val, int k, std::uint64_t eval_seed);

/// Minibatch Adam on the annealed IW-ELBO with learning-rate reduction and
/// early stopping on the validation score. Restores the best checkpoint.
RunRecord train_ceme(scm::CemeModel& model, const Dataset& train, const Dataset& val, const TrainConfig& cfg);

/// Same machinery with the MSE loss; afterwards sets sigma_hat to the RMS
/// training residual.
RunRecord train_regressor(scm::Regressor& reg, const Dataset& train, const Dataset& val, const TrainConfig& cfg);

struct TrainedRun {
  scm::FittedModel model;
  RunRecord record;
};

/// Initialises and trains one model of `variant` with seed cfg.seed.
/// CEME+ needs `known_tau`. Initial tau/sigma are 0.5 * sd(x) and 0.5 * sd(y).
TrainedRun fit_variant(scm::Variant variant, const Dataset& train, const Dataset& val, const TrainConfig& cfg,
                       std::optional<double> known_tau = std::nullopt);

/// Index of the non-failed record with the lowest best validation score.
/// Throws Error when every record failed.
std::size_t choose_best(std::span<const RunRecord> records);

struct RestartResult {
  std::vector<TrainedRun> runs;
  std::size_t chosen = 0;
};

/// cfg.restarts independent fits, restart r seeded with derive_seed(cfg.seed, "restart<r>").
RestartResult best_of_restarts(scm::Variant variant, const Dataset& train, const Dataset& val, const TrainConfig& cfg,
                               std::optional<double> known_tau = std::nullopt);

}  // namespace ceme::vi
