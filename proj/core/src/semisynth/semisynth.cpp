#include "ceme/semisynth/semisynth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ceme/error.hpp"
#include "ceme/random.hpp"
#include "ceme/scm/model.hpp"
#include "csv.hpp"
#include "json_io.hpp"

namespace ceme::semisynth {

TabularSpec card_default_spec() {
  TabularSpec s;
  s.covariate_columns = {"id",     "nearc2", "nearc4", "age",    "momdad14", "sinmom14", "step14", "reg661",
                         "reg662", "reg663", "reg664", "reg665", "reg666",   "reg667",   "reg668", "reg669",
                         "south66", "smsa",  "south",  "smsa66", "enroll",   "married",  "libcrd14"};
  s.treatment_column = "educ";
  s.outcome_column = "lwage";
  return s;
}

bool is_missing(std::string_view cell) {
  return cell.empty() || cell == "NA" || cell == "NaN" || cell == "nan" || cell == ".";
}

namespace {

// Standardises `v` in place; the name only feeds the error message.
void standardize(Eigen::Ref<Eigen::VectorXd> v, const std::string& name) {
  if (v.size() < 2) throw ConfigError("column '" + name + "': need at least two rows to standardise");
  const double mean = v.mean();
  const double sd = sample_sd(v);
  if (!(sd > 1e-12 * std::max(1.0, std::abs(mean))))
    throw ConfigError("column '" + name + "' has zero variance");
  v = (v.array() - mean) / sd;
}

}  // namespace

CleanedTable clean_and_standardize(std::string_view csv_text, TabularSpec spec, std::string_view source) {
  const auto table = detail::parse_csv(csv_text, source);
  if (table.rows.empty()) throw ConfigError(std::string(source) + ": table has no data rows");
  if (spec.covariate_columns.empty()) throw ConfigError("no covariate columns given");

  std::vector<std::string> names = spec.covariate_columns;
  names.push_back(spec.treatment_column);
  names.push_back(spec.outcome_column);
  std::vector<std::size_t> cols;
  for (const auto& name : names) {
    const auto c = table.column(name);
    if (c < 0) throw IoError(std::string(source) + ": no column named '" + name + "'");
    cols.push_back(static_cast<std::size_t>(c));
  }

  CleanedTable out;
  std::vector<double> values;  // row-major over used columns
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    if (std::any_of(cols.begin(), cols.end(), [&](std::size_t c) { return is_missing(row[c]); })) {
      ++out.dropped;
      continue;
    }
    for (std::size_t k = 0; k < cols.size(); ++k) {
      const auto v = detail::parse_double(row[cols[k]]);
      if (!v || !std::isfinite(*v))
        throw IoError(std::string(source) + ": non-numeric value '" + row[cols[k]] + "' in column '" + names[k] +
                      "', data row " + std::to_string(r + 1));
      values.push_back(*v);
    }
    out.kept_rows.push_back(r);
  }

  const auto n = static_cast<Eigen::Index>(out.kept_rows.size());
  if (n == 0) throw ConfigError(std::string(source) + ": every row has a missing value");
  const auto width = static_cast<Eigen::Index>(cols.size());
  const Eigen::Map<const Eigen::MatrixXd> m(values.data(), width, n);
  const auto d = width - 2;

  out.z = m.topRows(d);
  out.x_star = m.row(d).transpose();
  out.y = m.row(d + 1).transpose();
  if (spec.log_outcome) {
    if ((out.y.array() <= 0.0).any())
      throw ConfigError("column '" + spec.outcome_column + "' must be positive to take logs");
    out.y = out.y.array().log();
  }
  for (Eigen::Index k = 0; k < d; ++k) {
    Eigen::VectorXd col = out.z.row(k).transpose();
    standardize(col, names[static_cast<std::size_t>(k)]);
    out.z.row(k) = col.transpose();
  }
  standardize(out.x_star, spec.treatment_column);
  standardize(out.y, spec.outcome_column);

  spec.rows = static_cast<std::size_t>(n);
  out.spec = std::move(spec);
  return out;
}

CleanedTable clean_and_standardize_file(const std::filesystem::path& csv, TabularSpec spec) {
  return clean_and_standardize(detail::read_text(csv), std::move(spec), csv.string());
}

NetworkTruth::NetworkTruth(nnet::Mlp net, double sigma, double tau) : net_(std::move(net)), sigma_(sigma), tau_(tau) {
  if (net_.layer_sizes().size() < 2 || net_.layer_sizes().back() != 1 || net_.input_size() < 2)
    throw ShapeError("NetworkTruth: expected a network from (z, x*) to a scalar");
  if (!(sigma_ >= 0.0) || !(tau_ >= 0.0)) throw ConfigError("NetworkTruth: noise scales must be non-negative");
}

Eigen::VectorXd NetworkTruth::mu_y(const Eigen::MatrixXd& z, const Eigen::VectorXd& x_star) const {
  if (z.rows() + 1 != net_.input_size() || z.cols() != x_star.size())
    throw ShapeError("NetworkTruth::mu_y: input shape mismatch");
  return net_.forward(scm::stack_inputs(z, {&x_star})).row(0).transpose();
}

std::string to_checkpoint(const NetworkTruth& truth) {
  detail::json j;
  j["format"] = "ceme-network-truth-v1";
  j["mu_y"] = detail::mlp_to_json(truth.network());
  j["sigma"] = truth.sigma();
  j["tau"] = truth.tau();
  return j.dump();
}

NetworkTruth network_truth_from_checkpoint(std::string_view text) {
  const auto j = detail::parse_json(text, "network truth checkpoint");
  try {
    if (j.at("format").get<std::string>() != "ceme-network-truth-v1")
      throw IoError("network truth checkpoint: unknown format");
    return NetworkTruth(detail::mlp_from_json(j.at("mu_y")), j.at("sigma").get<double>(), j.at("tau").get<double>());
  } catch (const detail::json::exception& e) {
    throw IoError(std::string("network truth checkpoint: ") + e.what());
  }
}

vi::TrainConfig outcome_training_defaults() {
  auto c = vi::semisynthetic_defaults();
  c.network.hidden_width = 30;
  c.network.hidden_layers = 5;
  c.weight_decay = 0.01;
  c.restarts = 1;
  return c;
}

SyntheticOutcome make_synthetic_outcome(const Eigen::MatrixXd& z, const Eigen::VectorXd& x_star,
                                        const Eigen::VectorXd& y_real, const OutcomeConfig& cfg, std::uint64_t seed) {
  if (z.cols() != x_star.size() || y_real.size() != x_star.size())
    throw ShapeError("make_synthetic_outcome: inputs are not aligned");
  if (!(cfg.noise_fraction >= 0.0)) throw ConfigError("make_synthetic_outcome: noise fraction must be non-negative");

  Dataset all;
  all.z = z;
  all.x_star = x_star;
  all.x = x_star;
  all.y = y_real;

  auto train_cfg = cfg.train;
  train_cfg.seed = derive_seed(seed, "fit");
  Rng init_rng(derive_seed(train_cfg.seed, "init"));
  scm::Regressor reg(scm::Variant::oracle, static_cast<int>(z.rows()), train_cfg.network, init_rng);

  SyntheticOutcome out;
  out.record = vi::train_regressor(reg, all, all, train_cfg);
  if (out.record.failed) throw Error("synthetic outcome network: " + out.record.failure_message);

  out.mean = reg.predict(z, x_star);
  out.residual_sd = sample_sd(y_real - out.mean);
  out.delta_y_sd = cfg.noise_fraction * out.residual_sd;
  out.network = std::move(reg.mu_y_net);

  Rng noise_rng(derive_seed(seed, "noise"));
  out.y.resize(out.mean.size());
  for (Eigen::Index i = 0; i < out.y.size(); ++i) out.y(i) = out.mean(i) + out.delta_y_sd * standard_normal(noise_rng);
  return out;
}

std::vector<Eigen::VectorXd> inject_treatment_noise(const Eigen::VectorXd& x_star, const std::vector<double>& levels,
                                                    std::uint64_t seed) {
  for (double rho : levels)
    if (!(rho >= 0.0) || !std::isfinite(rho)) throw ConfigError("inject_treatment_noise: levels must be non-negative");
  const double sd = sample_sd(x_star);
  std::vector<Eigen::VectorXd> out;
  out.reserve(levels.size());
  for (double rho : levels) {
    Eigen::VectorXd x = x_star;
    if (rho > 0.0) {
      Rng rng(derive_seed(seed, "noise" + detail::format_double(rho)));
      for (Eigen::Index i = 0; i < x.size(); ++i) x(i) += rho * sd * standard_normal(rng);
    }
    out.push_back(std::move(x));
  }
  return out;
}

std::vector<Eigen::Index> split_sizes(Eigen::Index n, const std::vector<double>& fractions) {
  if (fractions.empty()) throw ConfigError("split: no fractions");
  double total = 0.0;
  for (double f : fractions) {
    if (!(f > 0.0)) throw ConfigError("split: fractions must be positive");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("split: fractions must sum to 1");
  if (n < static_cast<Eigen::Index>(fractions.size()))
    throw ConfigError("split: " + std::to_string(n) + " rows cannot fill " + std::to_string(fractions.size()) +
                      " splits");

  std::vector<Eigen::Index> sizes;
  Eigen::Index sum = 0;
  for (double f : fractions) {
    sizes.push_back(static_cast<Eigen::Index>(std::llround(f * static_cast<double>(n))));
    sum += sizes.back();
  }
  const auto largest = static_cast<std::size_t>(std::max_element(fractions.begin(), fractions.end()) - fractions.begin());
  sizes[largest] += n - sum;
  return sizes;
}

std::vector<std::vector<Eigen::Index>> split_indices(Eigen::Index n, const std::vector<double>& fractions,
                                                     std::uint64_t seed) {
  const auto sizes = split_sizes(n, fractions);
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Eigen::Index{0});
  Rng rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);

  std::vector<std::vector<Eigen::Index>> out;
  auto it = perm.begin();
  for (auto s : sizes) {
    out.emplace_back(it, it + s);
    it += s;
  }
  return out;
}

NetworkTruth Benchmark::truth(std::size_t level) const {
  return NetworkTruth(outcome.network, outcome.delta_y_sd, levels.at(level).tau);
}

Benchmark build_benchmark(CleanedTable table, const BuildConfig& cfg) {
  if (cfg.levels.empty()) throw ConfigError("build_benchmark: no noise levels");
  Benchmark b;
  b.seed = cfg.seed;
  b.sd_x_star = sample_sd(table.x_star);
  b.outcome = make_synthetic_outcome(table.z, table.x_star, table.y, cfg.outcome, derive_seed(cfg.seed, "outcome"));
  b.split = split_indices(table.x_star.size(), cfg.fractions, derive_seed(cfg.seed, "split"));
  if (b.split.size() != 3) throw ConfigError("build_benchmark: expected train, validation and test fractions");

  const auto xs = inject_treatment_noise(table.x_star, cfg.levels, cfg.seed);
  for (std::size_t i = 0; i < cfg.levels.size(); ++i) {
    Dataset all{table.z, table.x_star, xs[i], b.outcome.y};
    LevelData level;
    level.level = cfg.levels[i];
    level.tau = cfg.levels[i] * b.sd_x_star;
    level.train = all.subset(b.split[0]);
    level.val = all.subset(b.split[1]);
    level.test = all.subset(b.split[2]);
    b.levels.push_back(std::move(level));
  }
  b.table = std::move(table);
  return b;
}

std::string level_directory(double level) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "rho_%.2f", level);
  return buf;
}

std::vector<std::filesystem::path> write_benchmark(const Benchmark& b, const std::filesystem::path& out) {
  std::vector<std::filesystem::path> dirs;
  for (std::size_t i = 0; i < b.levels.size(); ++i) {
    const auto& level = b.levels[i];
    const auto dir = out / level_directory(level.level);
    std::filesystem::create_directories(dir);
    write_csv(dir / "train.csv", level.train);
    write_csv(dir / "val.csv", level.val);
    write_csv(dir / "test.csv", level.test);
    detail::write_text_atomic(dir / "truth.json", to_checkpoint(b.truth(i)));

    detail::json m;
    m["format"] = "ceme-semisynthetic-v1";
    m["noise_level"] = level.level;
    m["tau"] = level.tau;
    m["sd_x_star"] = b.sd_x_star;
    m["delta_y_sd"] = b.outcome.delta_y_sd;
    m["residual_sd"] = b.outcome.residual_sd;
    m["seed"] = b.seed;
    m["rows"] = b.table.spec.rows;
    m["dropped_rows"] = b.table.dropped;
    m["covariate_columns"] = b.table.spec.covariate_columns;
    m["treatment_column"] = b.table.spec.treatment_column;
    m["outcome_column"] = b.table.spec.outcome_column;
    m["log_outcome"] = b.table.spec.log_outcome;
    m["split_sizes"] = {b.split[0].size(), b.split[1].size(), b.split[2].size()};
    detail::write_text_atomic(dir / "manifest.json", m.dump(2) + "\n");
    dirs.push_back(dir);
  }
  return dirs;
}

std::string standin_table_csv(std::size_t n, int covariates, std::size_t missing, std::uint64_t seed) {
  if (covariates < 1) throw ConfigError("standin_table_csv: need at least one covariate");
  Rng rng(derive_seed(seed, "standin"));
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  std::string text;
  for (int k = 1; k <= covariates; ++k) text += "c" + std::to_string(k) + ",";
  text += "educ,iq,lwage\n";

  const std::size_t total = n + missing;
  // Rows that get an NA in a used column are spread evenly through the file.
  auto is_dropped = [&](std::size_t r) { return missing > 0 && (r * missing) % total < missing; };
  std::size_t dropped = 0;
  for (std::size_t r = 0; r < total; ++r) {
    std::vector<double> c(static_cast<std::size_t>(covariates));
    for (int k = 0; k < covariates; ++k)
      c[static_cast<std::size_t>(k)] = (k % 2 == 0) ? standard_normal(rng) : (unif(rng) < 0.4 ? 1.0 : 0.0);
    const double c2 = covariates > 1 ? c[1] : 0.0;
    const double c3 = covariates > 2 ? c[2] : 0.0;
    const double educ =
        std::clamp(std::round(13.0 + 1.6 * c[0] + 1.2 * c2 + 0.6 * c3 + 2.0 * standard_normal(rng)), 6.0, 18.0);
    const double lwage = 5.2 + 0.07 * educ + 0.15 * std::sin(1.5 * c[0]) - 0.12 * c2 + 0.05 * c3 * c3 +
                         0.004 * (educ - 13.0) * (educ - 13.0) + 0.35 * standard_normal(rng);
    const double iq = 100.0 + 8.0 * c[0] + 12.0 * standard_normal(rng);

    std::vector<std::string> cells;
    for (double v : c) cells.push_back(detail::format_double(v));
    cells.push_back(detail::format_double(educ));
    cells.push_back(unif(rng) < 0.3 ? "NA" : detail::format_double(std::round(iq)));
    cells.push_back(detail::format_double(lwage));
    if (is_dropped(r)) {
      const std::size_t used = static_cast<std::size_t>(covariates) + 2;  // covariates, educ, lwage
      std::size_t pick = dropped++ % used;
      if (pick == static_cast<std::size_t>(covariates) + 1) pick += 1;  // skip iq, hit lwage
      cells[pick] = "NA";
    }
    for (std::size_t k = 0; k < cells.size(); ++k) {
      if (k) text += ',';
      text += cells[k];
    }
    text += '\n';
  }
  return text;
}

}  // namespace ceme::semisynth
