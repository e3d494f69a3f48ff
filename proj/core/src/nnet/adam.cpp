#include "ceme/nnet/adam.hpp"

#include <cmath>

#include "ceme/error.hpp"

namespace ceme::nnet {

AdamState AdamState::for_parameters(std::span<const ParamView> params, AdamOptions options) {
  AdamState state;
  state.options = options;
  for (const auto& p : params) {
    state.first_moment.emplace_back(p.values.size(), 0.0);
    state.second_moment.emplace_back(p.values.size(), 0.0);
  }
  return state;
}

void adam_step(std::span<const ParamView> params, std::span<const GradView> grads, AdamState& state) {
  if (params.size() != grads.size() || params.size() != state.first_moment.size())
    throw ShapeError("adam_step: tensor count mismatch");
  const auto& o = state.options;
  if (!(o.learning_rate >= 0.0)) throw ConfigError("adam_step: learning rate must be non-negative");

  state.step_count += 1;
  const double t = static_cast<double>(state.step_count);
  const double correction1 = 1.0 - std::pow(o.beta1, t);
  const double correction2 = 1.0 - std::pow(o.beta2, t);

  for (std::size_t k = 0; k < params.size(); ++k) {
    auto values = params[k].values;
    const auto g = grads[k];
    auto& m = state.first_moment[k];
    auto& v = state.second_moment[k];
    if (values.size() != g.size() || values.size() != m.size())
      throw ShapeError("adam_step: shape mismatch in tensor " + std::to_string(k));
    const double decay = params[k].decay ? o.learning_rate * o.weight_decay : 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
      values[i] -= decay * values[i];
      m[i] = o.beta1 * m[i] + (1.0 - o.beta1) * g[i];
      v[i] = o.beta2 * v[i] + (1.0 - o.beta2) * g[i] * g[i];
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      values[i] -= o.learning_rate * m_hat / (std::sqrt(v_hat) + o.epsilon);
    }
  }
}

}  // namespace ceme::nnet
