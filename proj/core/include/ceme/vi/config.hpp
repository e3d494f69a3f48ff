#pragma once

#include <cstdint>
#include <string>

#include "ceme/scm/model.hpp"

namespace ceme::vi {

/// Optimiser, annealing and stopping settings. Defaults are the synthetic
/// experiment values for CEME at training size 1000/4000.
struct TrainConfig {
  int n_importance_samples = 32;
  int batch_size = 64;
  double learning_rate = 0.003;
  double weight_decay = 0.0;
  double initial_term_weight = 4.0;
  int anneal_epochs = 10;
  int lr_patience = 30;
  double lr_factor = 0.1;
  int early_stop_patience = 40;
  double beta1 = 0.9;
  double beta2 = 0.97;
  double adam_epsilon = 1e-8;
  int max_epochs = 2000;
  int restarts = 6;
  std::uint64_t seed = 0;
  scm::NetworkShape network{};

  /// Throws ConfigError on out-of-range values.
  void validate() const;
};

/// Synthetic-experiment defaults for a variant and training size:
/// batch 256 for CEME/CEME+ at 16000 rows else 64; learning rate 0.003
/// (CEME, <16000), 0.01 (CEME, 16000) or 0.001 (Oracle/Naive).
TrainConfig synthetic_defaults(scm::Variant variant, long n_train);

/// Education-wage defaults: width 26, batch 32, lr 0.001, weight decay 0.001,
/// initial weight 8 annealed over 5 epochs, patience 25/45.
TrainConfig semisynthetic_defaults();

}  // namespace ceme::vi
