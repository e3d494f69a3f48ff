#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "ceme/eval/metrics.hpp"
#include "ceme/gpdata/generator.hpp"
#include "ceme/scm/model.hpp"
#include "ceme/semisynth/semisynth.hpp"
#include "ceme/vi/config.hpp"

namespace ceme::experiment {

enum class Kind { synthetic, semisynthetic };
std::string_view to_string(Kind k);

struct SyntheticGrid {
  std::vector<double> noise_levels{0.1, 0.2, 0.4};
  std::vector<long> n_train{1000, 4000, 16000};
  int replicates = 200;
  long n_val = 8000;
  long n_test = 20000;
  gpdata::GeneratorOptions generator{};
};

struct SemisyntheticSource {
  std::filesystem::path csv;  // relative paths are taken from the config file's directory
  semisynth::TabularSpec columns = semisynth::card_default_spec();
  semisynth::BuildConfig build{};
};

/// Key/value overrides applied on top of the per-variant defaults, e.g.
/// {"learning_rate": 0.002, "hidden_width": 32}. Keys are TrainConfig field
/// names plus hidden_width and hidden_layers.
using TrainOverrides = std::map<std::string, double>;

struct ExperimentConfig {
  Kind kind = Kind::synthetic;
  std::string name = "experiment";
  std::filesystem::path out = "runs/experiment";
  std::uint64_t seed = 0;
  int jobs = 0;  // 0: one per hardware thread
  std::vector<scm::Variant> variants{scm::Variant::ceme, scm::Variant::ceme_plus, scm::Variant::oracle,
                                     scm::Variant::naive};
  int restarts = 6;
  SyntheticGrid synthetic{};
  SemisyntheticSource semisynthetic{};
  /// "all" applies to every variant, then the variant's own entry.
  std::map<std::string, TrainOverrides> training;
  eval::EvalOptions eval{};

  /// Throws ConfigError on empty grids, unknown override keys and the like.
  void validate() const;
};

/// Parses the JSON config format. Missing keys keep their defaults; unknown
/// keys are rejected so typos do not pass silently. `base_dir` resolves a
/// relative semisynthetic csv path.
ExperimentConfig config_from_json(std::string_view text, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);
/// Full config with every default spelled out.
std::string to_json(const ExperimentConfig& cfg);

/// Built-in desk-scale synthetic run: 10 datasets at L = 0.2, n_train 4000,
/// n_val 2000, n_test 5000, 3 restarts.
ExperimentConfig pilot_config();

/// Defaults for the variant and training size (synthetic or education-wage
/// tables), then the "all" overrides, then the variant's overrides.
vi::TrainConfig train_config(const ExperimentConfig& cfg, scm::Variant variant, long n_train);

/// Applies one override map; throws ConfigError on an unknown key.
void apply_overrides(vi::TrainConfig& tc, const TrainOverrides& overrides);

}  // namespace ceme::experiment
