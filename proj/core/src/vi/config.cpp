#include "ceme/vi/config.hpp"

#include "ceme/error.hpp"

namespace ceme::vi {

void TrainConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw ConfigError(std::string("TrainConfig: ") + what);
  };
  require(n_importance_samples >= 1, "n_importance_samples must be positive");
  require(batch_size >= 1, "batch_size must be positive");
  require(learning_rate > 0.0, "learning_rate must be positive");
  require(weight_decay >= 0.0, "weight_decay must be non-negative");
  require(initial_term_weight >= 1.0, "initial_term_weight must be at least 1");
  require(anneal_epochs >= 1, "anneal_epochs must be positive");
  require(lr_patience >= 1, "lr_patience must be positive");
  require(lr_factor > 0.0 && lr_factor < 1.0, "lr_factor must lie in (0, 1)");
  require(early_stop_patience >= 1, "early_stop_patience must be positive");
  require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0, "Adam betas must lie in [0, 1)");
  require(max_epochs >= 0, "max_epochs must be non-negative");
  require(restarts >= 1, "restarts must be positive");
  require(network.hidden_width >= 1 && network.hidden_layers >= 0, "invalid network shape");
}

TrainConfig synthetic_defaults(scm::Variant variant, long n_train) {
  TrainConfig c;
  if (scm::is_latent(variant)) {
    const bool large = n_train >= 16000;
    c.batch_size = large ? 256 : 64;
    c.learning_rate = large ? 0.01 : 0.003;
  } else {
    c.batch_size = 64;
    c.learning_rate = 0.001;
  }
  return c;
}

TrainConfig semisynthetic_defaults() {
  TrainConfig c;
  c.network.hidden_width = 26;
  c.batch_size = 32;
  c.learning_rate = 0.001;
  c.weight_decay = 0.001;
  c.initial_term_weight = 8.0;
  c.anneal_epochs = 5;
  c.lr_patience = 25;
  c.early_stop_patience = 45;
  return c;
}

}  // namespace ceme::vi
