#include "ceme/experiment/config.hpp"

#include <algorithm>
#include <initializer_list>

#include "ceme/error.hpp"
#include "json_io.hpp"

namespace ceme::experiment {

using detail::json;

std::string_view to_string(Kind k) { return k == Kind::synthetic ? "synthetic" : "semisynthetic"; }

namespace {

Kind parse_kind(const std::string& s) {
  if (s == "synthetic") return Kind::synthetic;
  if (s == "semisynthetic") return Kind::semisynthetic;
  throw ConfigError("unknown experiment kind '" + s + "'");
}

void only_keys(const json& j, std::string_view where, std::initializer_list<std::string_view> allowed) {
  if (!j.is_object()) throw ConfigError(std::string(where) + " must be an object");
  for (const auto& item : j.items())
    if (std::find(allowed.begin(), allowed.end(), item.key()) == allowed.end())
      throw ConfigError("unknown key '" + item.key() + "' in " + std::string(where));
}

template <typename T>
void read(const json& j, const char* key, T& into) {
  if (j.contains(key)) into = j.at(key).get<T>();
}

// Every override key and where it lands.
struct OverrideField {
  std::string_view name;
  void (*set)(vi::TrainConfig&, double);
  double (*get)(const vi::TrainConfig&);
};

#define CEME_FIELD(field, type)                                                               \
  OverrideField {                                                                              \
    #field, [](vi::TrainConfig& c, double v) { c.field = static_cast<type>(v); },              \
        [](const vi::TrainConfig& c) { return static_cast<double>(c.field); }                  \
  }

const std::vector<OverrideField>& override_fields() {
  static const std::vector<OverrideField> fields{
      CEME_FIELD(n_importance_samples, int),
      CEME_FIELD(batch_size, int),
      CEME_FIELD(learning_rate, double),
      CEME_FIELD(weight_decay, double),
      CEME_FIELD(initial_term_weight, double),
      CEME_FIELD(anneal_epochs, int),
      CEME_FIELD(lr_patience, int),
      CEME_FIELD(lr_factor, double),
      CEME_FIELD(early_stop_patience, int),
      CEME_FIELD(beta1, double),
      CEME_FIELD(beta2, double),
      CEME_FIELD(adam_epsilon, double),
      CEME_FIELD(max_epochs, int),
      CEME_FIELD(network.hidden_width, int),
      CEME_FIELD(network.hidden_layers, int),
  };
  return fields;
}

#undef CEME_FIELD

// "network.hidden_width" is spelled "hidden_width" in config files.
std::string_view key_of(const OverrideField& f) {
  const auto dot = f.name.find('.');
  return dot == std::string_view::npos ? f.name : f.name.substr(dot + 1);
}

TrainOverrides overrides_from_json(const json& j, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  TrainOverrides out;
  for (const auto& item : j.items()) {
    const bool known = std::any_of(override_fields().begin(), override_fields().end(),
                                   [&](const OverrideField& f) { return key_of(f) == item.key(); });
    if (!known) throw ConfigError("unknown training key '" + item.key() + "' in " + where);
    if (!item.value().is_number()) throw ConfigError(where + "." + item.key() + " must be a number");
    out[item.key()] = item.value().get<double>();
  }
  return out;
}

json generator_to_json(const gpdata::GeneratorOptions& g) {
  return {{"alpha", g.kernel.alpha},
          {"lengthscale", g.kernel.lengthscale},
          {"grid_points_1d", g.grid_points_1d},
          {"grid_points_per_axis_2d", g.grid_points_per_axis_2d},
          {"padding_low", g.padding.low},
          {"padding_high", g.padding.high},
          {"base_jitter", g.base_jitter}};
}

void generator_from_json(const json& j, gpdata::GeneratorOptions& g) {
  only_keys(j, "synthetic.generator",
            {"alpha", "lengthscale", "grid_points_1d", "grid_points_per_axis_2d", "padding_low", "padding_high",
             "base_jitter"});
  read(j, "alpha", g.kernel.alpha);
  read(j, "lengthscale", g.kernel.lengthscale);
  read(j, "grid_points_1d", g.grid_points_1d);
  read(j, "grid_points_per_axis_2d", g.grid_points_per_axis_2d);
  read(j, "padding_low", g.padding.low);
  read(j, "padding_high", g.padding.high);
  read(j, "base_jitter", g.base_jitter);
}

}  // namespace

void apply_overrides(vi::TrainConfig& tc, const TrainOverrides& overrides) {
  for (const auto& [key, value] : overrides) {
    auto it = std::find_if(override_fields().begin(), override_fields().end(),
                           [&](const OverrideField& f) { return key_of(f) == key; });
    if (it == override_fields().end()) throw ConfigError("unknown training key '" + key + "'");
    it->set(tc, value);
  }
}

vi::TrainConfig train_config(const ExperimentConfig& cfg, scm::Variant variant, long n_train) {
  auto tc = cfg.kind == Kind::synthetic ? vi::synthetic_defaults(variant, n_train) : vi::semisynthetic_defaults();
  tc.restarts = cfg.restarts;
  if (auto it = cfg.training.find("all"); it != cfg.training.end()) apply_overrides(tc, it->second);
  if (auto it = cfg.training.find(std::string(scm::to_string(variant))); it != cfg.training.end())
    apply_overrides(tc, it->second);
  tc.validate();
  return tc;
}

void ExperimentConfig::validate() const {
  if (variants.empty()) throw ConfigError("config: no variants");
  if (restarts < 1) throw ConfigError("config: restarts must be positive");
  if (jobs < 0) throw ConfigError("config: jobs must be non-negative");
  for (const auto& [key, ov] : training) {
    if (key != "all") scm::parse_variant(key);
    vi::TrainConfig probe;
    apply_overrides(probe, ov);
  }
  if (kind == Kind::synthetic) {
    const auto& s = synthetic;
    if (s.noise_levels.empty() || s.n_train.empty() || s.replicates < 1)
      throw ConfigError("config: the synthetic grid is empty");
    for (double l : s.noise_levels)
      if (!(l >= 0.0)) throw ConfigError("config: noise levels must be non-negative");
    for (long n : s.n_train)
      if (n < 2) throw ConfigError("config: n_train must be at least 2");
    if (s.n_val < 2 || s.n_test < 2) throw ConfigError("config: n_val and n_test must be at least 2");
  } else {
    if (semisynthetic.csv.empty()) throw ConfigError("config: semisynthetic.csv is required");
    if (semisynthetic.build.levels.empty()) throw ConfigError("config: no noise levels");
    if (semisynthetic.build.fractions.size() != 3)
      throw ConfigError("config: fractions must list train, validation and test");
  }
  if (eval.aid.n_treatment < 1 || eval.aid.n_y < 1) throw ConfigError("config: eval sample sizes must be positive");
}

ExperimentConfig config_from_json(std::string_view text, const std::filesystem::path& base_dir) {
  const auto j = detail::parse_json(text, "experiment config");
  ExperimentConfig c;
  try {
    only_keys(j, "config",
              {"kind", "name", "out", "seed", "jobs", "variants", "restarts", "synthetic", "semisynthetic",
               "training", "eval"});
    if (j.contains("kind")) c.kind = parse_kind(j.at("kind").get<std::string>());
    read(j, "name", c.name);
    if (j.contains("out")) c.out = j.at("out").get<std::string>();
    read(j, "seed", c.seed);
    read(j, "jobs", c.jobs);
    read(j, "restarts", c.restarts);
    if (j.contains("variants")) {
      c.variants.clear();
      for (const auto& v : j.at("variants")) c.variants.push_back(scm::parse_variant(v.get<std::string>()));
    }

    if (j.contains("synthetic")) {
      const auto& s = j.at("synthetic");
      only_keys(s, "synthetic", {"noise_levels", "n_train", "replicates", "n_val", "n_test", "generator"});
      read(s, "noise_levels", c.synthetic.noise_levels);
      read(s, "n_train", c.synthetic.n_train);
      read(s, "replicates", c.synthetic.replicates);
      read(s, "n_val", c.synthetic.n_val);
      read(s, "n_test", c.synthetic.n_test);
      if (s.contains("generator")) generator_from_json(s.at("generator"), c.synthetic.generator);
    }

    if (j.contains("semisynthetic")) {
      const auto& s = j.at("semisynthetic");
      only_keys(s, "semisynthetic",
                {"csv", "covariates", "treatment", "outcome", "log_outcome", "levels", "fractions",
                 "outcome_noise_fraction", "outcome_training"});
      auto& src = c.semisynthetic;
      if (s.contains("csv")) {
        std::filesystem::path p = s.at("csv").get<std::string>();
        src.csv = p.empty() || p.is_absolute() || base_dir.empty() ? p : base_dir / p;
      }
      read(s, "covariates", src.columns.covariate_columns);
      read(s, "treatment", src.columns.treatment_column);
      read(s, "outcome", src.columns.outcome_column);
      read(s, "log_outcome", src.columns.log_outcome);
      read(s, "levels", src.build.levels);
      read(s, "fractions", src.build.fractions);
      read(s, "outcome_noise_fraction", src.build.outcome.noise_fraction);
      if (s.contains("outcome_training"))
        apply_overrides(src.build.outcome.train, overrides_from_json(s.at("outcome_training"), "outcome_training"));
    }

    if (j.contains("training")) {
      const auto& t = j.at("training");
      if (!t.is_object()) throw ConfigError("training must be an object");
      for (const auto& item : t.items()) c.training[item.key()] = overrides_from_json(item.value(), "training." + item.key());
    }

    if (j.contains("eval")) {
      const auto& e = j.at("eval");
      only_keys(e, "eval", {"n_treatment", "n_y", "range_pad", "z_nodes", "z_bound", "naive_input"});
      read(e, "n_treatment", c.eval.aid.n_treatment);
      read(e, "n_y", c.eval.aid.n_y);
      read(e, "range_pad", c.eval.aid.range_pad);
      read(e, "z_nodes", c.eval.quadrature.z_nodes);
      read(e, "z_bound", c.eval.quadrature.z_bound);
      if (e.contains("naive_input")) {
        const auto s = e.at("naive_input").get<std::string>();
        if (s == "observed")
          c.eval.naive_input = eval::NaiveInput::observed;
        else if (s == "true_treatment")
          c.eval.naive_input = eval::NaiveInput::true_treatment;
        else
          throw ConfigError("eval.naive_input must be 'observed' or 'true_treatment'");
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("experiment config: ") + e.what());
  }
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  return config_from_json(detail::read_text(path), path.parent_path());
}

std::string to_json(const ExperimentConfig& c) {
  json j;
  j["kind"] = to_string(c.kind);
  j["name"] = c.name;
  j["out"] = c.out.generic_string();
  j["seed"] = c.seed;
  j["jobs"] = c.jobs;
  j["restarts"] = c.restarts;
  j["variants"] = json::array();
  for (auto v : c.variants) j["variants"].push_back(scm::to_string(v));

  j["synthetic"] = {{"noise_levels", c.synthetic.noise_levels},
                    {"n_train", c.synthetic.n_train},
                    {"replicates", c.synthetic.replicates},
                    {"n_val", c.synthetic.n_val},
                    {"n_test", c.synthetic.n_test},
                    {"generator", generator_to_json(c.synthetic.generator)}};

  const auto& s = c.semisynthetic;
  json outcome_training;
  const vi::TrainConfig& ot = s.build.outcome.train;
  for (const auto& f : override_fields()) outcome_training[std::string(key_of(f))] = f.get(ot);
  j["semisynthetic"] = {{"csv", s.csv.generic_string()},
                        {"covariates", s.columns.covariate_columns},
                        {"treatment", s.columns.treatment_column},
                        {"outcome", s.columns.outcome_column},
                        {"log_outcome", s.columns.log_outcome},
                        {"levels", s.build.levels},
                        {"fractions", s.build.fractions},
                        {"outcome_noise_fraction", s.build.outcome.noise_fraction},
                        {"outcome_training", outcome_training}};

  j["training"] = json::object();
  for (const auto& [key, ov] : c.training) j["training"][key] = ov;

  j["eval"] = {{"n_treatment", c.eval.aid.n_treatment},
               {"n_y", c.eval.aid.n_y},
               {"range_pad", c.eval.aid.range_pad},
               {"z_nodes", c.eval.quadrature.z_nodes},
               {"z_bound", c.eval.quadrature.z_bound},
               {"naive_input", c.eval.naive_input == eval::NaiveInput::observed ? "observed" : "true_treatment"}};
  return j.dump(2) + "\n";
}

ExperimentConfig pilot_config() {
  ExperimentConfig c;
  c.kind = Kind::synthetic;
  c.name = "pilot";
  c.out = "runs/pilot";
  c.seed = 20240;
  c.restarts = 3;
  c.synthetic.noise_levels = {0.2};
  c.synthetic.n_train = {4000};
  c.synthetic.replicates = 10;
  c.synthetic.n_val = 2000;
  c.synthetic.n_test = 5000;
  return c;
}

}  // namespace ceme::experiment
