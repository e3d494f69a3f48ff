#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ceme/nnet/mlp.hpp"

namespace ceme::nnet {

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.97;
  double epsilon = 1e-8;
  double weight_decay = 0.0;
};

/// Moment estimates for one list of parameter tensors.
struct AdamState {
  AdamOptions options;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
  std::int64_t step_count = 0;

  /// Zero moments shaped like `params`.
  static AdamState for_parameters(std::span<const ParamView> params, AdamOptions options);
};

/// One Adam step with bias correction. Decoupled weight decay
/// (p -= lr * wd * p) is applied to tensors flagged `decay` before the Adam delta.
void adam_step(std::span<const ParamView> params, std::span<const GradView> grads, AdamState& state);

}  // namespace ceme::nnet
