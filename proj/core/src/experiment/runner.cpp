#include "ceme/experiment/runner.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <map>
#include <ostream>
#include <thread>

#include "ceme/error.hpp"
#include "ceme/gpdata/generator.hpp"
#include "ceme/semisynth/semisynth.hpp"
#include "ceme/vi/trainer.hpp"
#include "csv.hpp"
#include "json_io.hpp"

namespace ceme::experiment {

using detail::json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// grid, seeds, filters

std::vector<DatasetSpec> dataset_grid(const ExperimentConfig& cfg) {
  std::vector<DatasetSpec> out;
  if (cfg.kind == Kind::synthetic) {
    const auto& s = cfg.synthetic;
    for (double level : s.noise_levels)
      for (long n : s.n_train)
        for (int r = 0; r < s.replicates; ++r) {
          char buf[96];
          std::snprintf(buf, sizeof buf, "L%s_n%ld_r%03d", detail::format_double(level).c_str(), n, r);
          out.push_back({buf, level, n, r});
        }
  } else {
    for (double level : cfg.semisynthetic.build.levels) out.push_back({semisynth::level_directory(level), level, 0, 0});
  }
  return out;
}

std::uint64_t data_seed(std::uint64_t master, const std::string& id) { return derive_seed(master, id + "|data"); }

std::uint64_t restart_seed(std::uint64_t master, const std::string& id, scm::Variant v, int restart) {
  return derive_seed(master, id + "|" + std::string(scm::to_string(v)) + "|" + std::to_string(restart) + "|train");
}

std::uint64_t eval_seed(std::uint64_t master, const std::string& id) { return derive_seed(master, id + "|eval"); }

Filter parse_filter(std::string_view text) {
  const auto eq = text.find('=');
  if (eq == std::string_view::npos || eq == 0 || eq + 1 == text.size())
    throw ConfigError("filter must look like key=value, got '" + std::string(text) + "'");
  Filter f;
  f.key = std::string(text.substr(0, eq));
  if (f.key == "dataset") f.key = "dataset_id";
  static const char* keys[] = {"dataset_id", "noise_level", "n_train", "replicate", "variant"};
  if (std::find(std::begin(keys), std::end(keys), f.key) == std::end(keys))
    throw ConfigError("unknown filter key '" + f.key + "'");
  auto rest = text.substr(eq + 1);
  while (true) {
    const auto comma = rest.find(',');
    f.values.emplace_back(rest.substr(0, comma));
    if (comma == std::string_view::npos) break;
    rest.remove_prefix(comma + 1);
  }
  if (f.key == "variant")
    for (const auto& v : f.values) scm::parse_variant(v);
  return f;
}

namespace {

bool value_matches(const Filter& f, const DatasetSpec& d, const std::string* variant) {
  for (const auto& v : f.values) {
    if (f.key == "dataset_id" && v == d.id) return true;
    if (f.key == "variant" && variant && v == *variant) return true;
    if (f.key == "noise_level" || f.key == "n_train" || f.key == "replicate") {
      const auto num = detail::parse_double(v);
      if (!num) throw ConfigError("filter " + f.key + " needs a number, got '" + v + "'");
      const double have = f.key == "noise_level" ? d.noise_level
                          : f.key == "n_train"   ? static_cast<double>(d.n_train)
                                                 : static_cast<double>(d.replicate);
      if (std::abs(*num - have) < 1e-12) return true;
    }
  }
  return false;
}

}  // namespace

bool matches(const std::vector<Filter>& filters, const DatasetSpec& d) {
  for (const auto& f : filters)
    if (f.key != "variant" && !value_matches(f, d, nullptr)) return false;
  return true;
}

bool matches(const std::vector<Filter>& filters, const DatasetSpec& d, scm::Variant v) {
  const std::string name(scm::to_string(v));
  for (const auto& f : filters)
    if (!value_matches(f, d, &name)) return false;
  return true;
}

fs::path Layout::cell(const std::string& id, scm::Variant v) const {
  return root / "runs" / id / std::string(scm::to_string(v));
}

fs::path Layout::restart(const std::string& id, scm::Variant v, int r) const {
  char buf[32];
  std::snprintf(buf, sizeof buf, "restart_%d", r);
  return cell(id, v) / buf;
}

fs::path Layout::result(const std::string& id, scm::Variant v) const {
  return root / "results" / id / (std::string(scm::to_string(v)) + ".json");
}

// ---------------------------------------------------------------------------
// logging and workers

void Logger::info(const std::string& message) {
  if (!sink_) return;
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char stamp[32];
  std::tm tm{};
  localtime_r(&now, &tm);
  std::strftime(stamp, sizeof stamp, "%H:%M:%S", &tm);
  std::lock_guard lock(mutex_);
  *sink_ << '[' << stamp << "] " << message << std::endl;
}

void run_parallel(std::size_t n, int jobs, const std::function<void(std::size_t)>& task) {
  std::size_t workers = jobs > 0 ? static_cast<std::size_t>(jobs) : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) task(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first;
  std::mutex error_mutex;
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) {
          try {
            task(i);
          } catch (...) {
            std::lock_guard lock(error_mutex);
            if (!first) first = std::current_exception();
          }
        }
      });
  }
  if (first) std::rethrow_exception(first);
}

// ---------------------------------------------------------------------------
// shared helpers

namespace {

std::unique_ptr<CausalTruth> load_truth(const fs::path& file) {
  const auto text = detail::read_text(file);
  const auto j = detail::parse_json(text, file.string());
  const auto format = j.value("format", std::string());
  if (format == "ceme-gp-truth-v1")
    return std::make_unique<gpdata::SyntheticTruth>(gpdata::synthetic_truth_from_checkpoint(text));
  if (format == "ceme-network-truth-v1")
    return std::make_unique<semisynth::NetworkTruth>(semisynth::network_truth_from_checkpoint(text));
  throw IoError(file.string() + ": unknown truth format '" + format + "'");
}

void write_json(const fs::path& file, const json& j) {
  fs::create_directories(file.parent_path());
  detail::write_text_atomic(file, j.dump(2) + "\n");
}

// Training-set size from a dataset manifest.
long manifest_n_train(const fs::path& dataset_dir) {
  const auto j = detail::read_json_file(dataset_dir / "manifest.json");
  if (j.contains("n_train")) return j.at("n_train").get<long>();
  return j.at("split_sizes").at(0).get<long>();
}

void write_run_manifest(const ExperimentConfig& cfg, const Layout& layout) {
  json j;
  j["format"] = "ceme-experiment-v1";
  j["config"] = json::parse(to_json(cfg));
  j["seed_rule"] = {{"data", "derive_seed(master, \"<id>|data\")"},
                    {"semisynthetic", "derive_seed(master, \"semisynthetic|data\")"},
                    {"restart", "derive_seed(master, \"<id>|<variant>|<r>|train\")"},
                    {"eval", "derive_seed(master, \"<id>|eval\")"},
                    {"derive_seed", "splitmix64(splitmix64(master) ^ fnv1a64(tag))"}};
  j["datasets"] = json::array();
  for (const auto& d : dataset_grid(cfg)) j["datasets"].push_back(d.id);
  write_json(layout.manifest(), j);
}

std::string fmt(double v) { return detail::format_double(v); }

}  // namespace

// ---------------------------------------------------------------------------
// generate

GenerateSummary generate(const ExperimentConfig& cfg, const std::vector<Filter>& filters, Logger& log) {
  cfg.validate();
  const Layout layout{cfg.out};
  fs::create_directories(layout.root);
  write_run_manifest(cfg, layout);
  GenerateSummary summary;

  if (cfg.kind == Kind::semisynthetic) {
    const auto& src = cfg.semisynthetic;
    log.info("semisynthetic: reading " + src.csv.string());
    auto table = semisynth::clean_and_standardize_file(src.csv, src.columns);
    log.info("semisynthetic: " + std::to_string(table.spec.rows) + " rows kept, " + std::to_string(table.dropped) +
             " dropped for missing values; fitting the outcome network");
    auto build = src.build;
    build.seed = derive_seed(cfg.seed, "semisynthetic|data");
    const auto bench = semisynth::build_benchmark(std::move(table), build);
    log.info("semisynthetic: residual sd " + fmt(bench.outcome.residual_sd) + ", outcome noise sd " +
             fmt(bench.outcome.delta_y_sd));
    summary.written = semisynth::write_benchmark(bench, layout.root / "datasets").size();
    return summary;
  }

  std::vector<DatasetSpec> todo;
  for (const auto& d : dataset_grid(cfg))
    if (matches(filters, d)) todo.push_back(d);
  std::mutex m;
  run_parallel(todo.size(), cfg.jobs, [&](std::size_t i) {
    const auto& d = todo[i];
    try {
      const auto seed = data_seed(cfg.seed, d.id);
      auto bundle = gpdata::dataset_bundle(d.n_train, cfg.synthetic.n_val, cfg.synthetic.n_test, d.noise_level, seed,
                                           cfg.synthetic.generator);
      const auto dir = layout.dataset(d.id);
      fs::create_directories(dir);
      write_csv(dir / "train.csv", bundle.splits[0]);
      write_csv(dir / "val.csv", bundle.splits[1]);
      write_csv(dir / "test.csv", bundle.splits[2]);
      detail::write_text_atomic(dir / "truth.json", gpdata::to_checkpoint(*bundle.truth));
      json man;
      man["format"] = "ceme-synthetic-dataset-v1";
      man["id"] = d.id;
      man["noise_level"] = d.noise_level;
      man["n_train"] = d.n_train;
      man["n_val"] = cfg.synthetic.n_val;
      man["n_test"] = cfg.synthetic.n_test;
      man["replicate"] = d.replicate;
      man["seed"] = seed;
      man["tau"] = bundle.truth->tau();
      man["sigma"] = bundle.truth->sigma();
      write_json(dir / "manifest.json", man);
      log.info("generated " + d.id);
      std::lock_guard lock(m);
      ++summary.written;
    } catch (const Error& e) {
      log.info("generation failed for " + d.id + ": " + e.what());
      std::lock_guard lock(m);
      summary.failures.push_back(d.id + ": " + e.what());
    }
  });
  std::sort(summary.failures.begin(), summary.failures.end());
  return summary;
}

// ---------------------------------------------------------------------------
// train

namespace {

struct Cell {
  DatasetSpec dataset;
  scm::Variant variant;
};

std::vector<Cell> cells_of(const ExperimentConfig& cfg, const std::vector<Filter>& filters) {
  std::vector<Cell> out;
  for (const auto& d : dataset_grid(cfg))
    for (auto v : cfg.variants)
      if (matches(filters, d, v)) out.push_back({d, v});
  return out;
}

bool skip_cell(const Cell& c) { return c.variant == scm::Variant::ceme_plus && c.dataset.noise_level == 0.0; }

}  // namespace

TrainSummary train(const ExperimentConfig& cfg, const std::vector<Filter>& filters, Logger& log) {
  cfg.validate();
  const Layout layout{cfg.out};
  fs::create_directories(layout.root);
  write_run_manifest(cfg, layout);

  const auto cells = cells_of(cfg, filters);
  TrainSummary summary;
  summary.cells = cells.size();
  std::atomic<std::size_t> trained{0}, resumed{0}, done{0}, skipped{0}, failed{0};

  run_parallel(cells.size(), cfg.jobs, [&](std::size_t i) {
    const auto& c = cells[i];
    const auto& id = c.dataset.id;
    const std::string tag = id + "/" + std::string(scm::to_string(c.variant));
    const auto cell_file = layout.cell(id, c.variant) / "cell.json";
    if (fs::exists(cell_file)) {
      ++done;
      return;
    }
    if (skip_cell(c)) {
      write_json(cell_file, {{"status", "skipped"},
                             {"reason", "CEME+ is not fitted without measurement error (noise level 0)"}});
      log.info(tag + ": skipped, noise level 0");
      ++skipped;
      return;
    }

    const auto data_dir = layout.dataset(id);
    Dataset tr, va;
    std::optional<double> known_tau;
    try {
      if (!fs::exists(data_dir / "manifest.json")) throw IoError("dataset " + id + " is missing; run generate first");
      tr = read_csv(data_dir / "train.csv");
      va = read_csv(data_dir / "val.csv");
      if (c.variant == scm::Variant::ceme_plus) known_tau = load_truth(data_dir / "truth.json")->tau();
    } catch (const Error& e) {
      write_json(cell_file, {{"status", "failed"}, {"reason", e.what()}});
      log.info(tag + ": failed, " + e.what());
      ++failed;
      return;
    }

    std::vector<vi::RunRecord> records;
    json restarts = json::array();
    for (int r = 0; r < cfg.restarts; ++r) {
      const auto dir = layout.restart(id, c.variant, r);
      vi::RunRecord rec;
      if (fs::exists(dir / "record.json")) {
        rec = vi::run_record_from_json(detail::read_text(dir / "record.json"));
        ++resumed;
      } else {
        auto tc = train_config(cfg, c.variant, static_cast<long>(tr.size()));
        tc.seed = restart_seed(cfg.seed, id, c.variant, r);
        try {
          auto run = vi::fit_variant(c.variant, tr, va, tc, known_tau);
          rec = std::move(run.record);
          fs::create_directories(dir);
          detail::write_text_atomic(dir / "model.json", scm::to_checkpoint(run.model));
        } catch (const Error& e) {
          rec = vi::RunRecord{};
          rec.seed = tc.seed;
          rec.failed = true;
          rec.failure_message = e.what();
        }
        fs::create_directories(dir);
        detail::write_text_atomic(dir / "record.json", vi::to_json(rec));
        ++trained;
        char line[256];
        std::snprintf(line, sizeof line, ": restart %d, %zu epochs, best score %.6g, %s, %.1fs", r,
                      rec.train_loss.size(), rec.best_validation_score,
                      rec.failed ? ("failed: " + rec.failure_message).c_str()
                                 : std::string(vi::to_string(rec.stop_reason)).c_str(),
                      rec.wall_seconds);
        log.info(tag + line);
      }
      restarts.push_back({{"seed", rec.seed},
                          {"failed", rec.failed},
                          {"best_validation_score", std::isfinite(rec.best_validation_score)
                                                        ? json(rec.best_validation_score)
                                                        : json(nullptr)},
                          {"epochs", rec.train_loss.size()}});
      records.push_back(std::move(rec));
    }

    json cell;
    try {
      const auto chosen = vi::choose_best(records);
      cell = {{"status", "ok"}, {"chosen", chosen}, {"seed", records[chosen].seed}, {"restarts", restarts}};
      log.info(tag + ": chose restart " + std::to_string(chosen));
    } catch (const Error& e) {
      std::string reason = "every restart failed";
      if (!records.empty()) reason += ": " + records.front().failure_message;
      cell = {{"status", "failed"}, {"reason", reason}, {"restarts", restarts}};
      log.info(tag + ": " + reason);
      ++failed;
    }
    write_json(cell_file, cell);
  });

  summary.runs_trained = trained;
  summary.runs_resumed = resumed;
  summary.cells_done = done;
  summary.cells_skipped = skipped;
  summary.cells_failed = failed;
  return summary;
}

// ---------------------------------------------------------------------------
// evaluate

namespace {

std::string opt(const std::optional<double>& v) { return v ? fmt(*v) : std::string(); }

void write_plot_data(const Layout& layout, const std::vector<AggregateRow>& rows) {
  fs::create_directories(layout.plots());
  struct Metric {
    const char* name;
    std::optional<double> (*get)(const AggregateRow&);
  };
  const Metric metrics[] = {
      {"rmse", [](const AggregateRow& r) { return std::optional<double>(r.rmse); }},
      {"aid", [](const AggregateRow& r) { return r.aid; }},
      {"rel_err_sigma", [](const AggregateRow& r) { return r.rel_err_sigma; }},
      {"rel_err_tau", [](const AggregateRow& r) { return r.rel_err_tau; }},
  };

  // Group keys in first-seen order, which is grid order.
  using Key = std::tuple<double, long, std::string>;
  std::vector<Key> keys;
  for (const auto& r : rows) {
    Key k{r.noise_level, r.n_train, r.variant};
    if (std::find(keys.begin(), keys.end(), k) == keys.end()) keys.push_back(k);
  }

  std::string summary = "metric,noise_level,n_train,variant,count,q25,median,q75\n";
  for (const auto& m : metrics) {
    std::string text = "dataset_id,noise_level,n_train,variant,value\n";
    for (const auto& r : rows)
      if (auto v = m.get(r))
        text += r.dataset_id + "," + fmt(r.noise_level) + "," + std::to_string(r.n_train) + "," + r.variant + "," +
                fmt(*v) + "\n";
    detail::write_text_atomic(layout.plots() / (std::string(m.name) + ".csv"), text);

    for (const auto& [level, n, variant] : keys) {
      std::vector<double> vals;
      for (const auto& r : rows)
        if (r.noise_level == level && r.n_train == n && r.variant == variant)
          if (auto v = m.get(r)) vals.push_back(*v);
      if (vals.empty()) continue;
      summary += std::string(m.name) + "," + fmt(level) + "," + std::to_string(n) + "," + variant + "," +
                 std::to_string(vals.size()) + "," + fmt(quantile(vals, 0.25)) + "," + fmt(quantile(vals, 0.5)) +
                 "," + fmt(quantile(vals, 0.75)) + "\n";
    }
  }
  detail::write_text_atomic(layout.plots() / "summary.csv", summary);
}

}  // namespace

EvalSummary evaluate(const ExperimentConfig& cfg, const std::vector<Filter>& filters, Logger& log) {
  cfg.validate();
  const Layout layout{cfg.out};
  fs::create_directories(layout.root);
  write_run_manifest(cfg, layout);

  const auto cells = cells_of(cfg, filters);
  // Each slot is filled by exactly one task, so results stay in grid order.
  std::vector<std::optional<AggregateRow>> rows(cells.size());
  std::vector<std::optional<FailureRow>> failures(cells.size());

  run_parallel(cells.size(), cfg.jobs, [&](std::size_t i) {
    const auto& c = cells[i];
    const auto& id = c.dataset.id;
    const std::string variant(scm::to_string(c.variant));
    const auto data_dir = layout.dataset(id);
    FailureRow fail{id, c.dataset.noise_level, c.dataset.n_train, variant, "missing", ""};
    try {
      if (fail.n_train == 0 && fs::exists(data_dir / "manifest.json")) fail.n_train = manifest_n_train(data_dir);
      const auto cell_file = layout.cell(id, c.variant) / "cell.json";
      if (!fs::exists(cell_file)) {
        fail.reason = "not trained";
        failures[i] = fail;
        return;
      }
      const auto cell = detail::read_json_file(cell_file);
      const auto status = cell.at("status").get<std::string>();
      if (status != "ok") {
        fail.status = status;
        fail.reason = cell.value("reason", std::string());
        failures[i] = fail;
        return;
      }
      const int chosen = cell.at("chosen").get<int>();
      const auto model_file = layout.restart(id, c.variant, chosen) / "model.json";
      if (!fs::exists(model_file)) {
        fail.reason = "checkpoint " + model_file.string() + " not found";
        failures[i] = fail;
        return;
      }
      const auto model = scm::fitted_model_from_checkpoint(detail::read_text(model_file));
      const auto truth = load_truth(data_dir / "truth.json");
      const auto test = read_csv(data_dir / "test.csv");

      auto opts = cfg.eval;
      opts.aid.seed = eval_seed(cfg.seed, id);
      eval::Predictions pred;
      const auto report = eval::evaluate(model, *truth, test, opts, &pred);
      const auto result_file = layout.result(id, c.variant);
      fs::create_directories(result_file.parent_path());
      detail::write_text_atomic(result_file, eval::to_json(report));
      detail::write_text_atomic(result_file.parent_path() / (variant + "_predictions.csv"),
                                eval::predictions_csv(pred));

      rows[i] = AggregateRow{id,           c.dataset.noise_level, fail.n_train,
                             variant,      report.rmse_mu_y,      report.rel_err_sigma,
                             report.rel_err_tau, report.aid,      cell.at("seed").get<std::uint64_t>()};
      log.info(id + "/" + variant + ": rmse " + fmt(report.rmse_mu_y) +
               (report.aid ? ", aid " + fmt(*report.aid) : std::string()));
    } catch (const Error& e) {
      fail.status = "failed";
      fail.reason = e.what();
      failures[i] = fail;
      log.info(id + "/" + variant + ": evaluation failed, " + e.what());
    } catch (const json::exception& e) {
      fail.status = "failed";
      fail.reason = e.what();
      failures[i] = fail;
    }
  });

  EvalSummary out;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (rows[i]) out.rows.push_back(*rows[i]);
    if (failures[i]) out.failures.push_back(*failures[i]);
  }
  detail::write_text_atomic(layout.aggregate(), aggregate_csv(out.rows));
  detail::write_text_atomic(layout.failures(), failures_csv(out.failures));
  write_plot_data(layout, out.rows);
  return out;
}

std::string aggregate_csv(const std::vector<AggregateRow>& rows) {
  std::string text = "dataset_id,noise_level,n_train,variant,rmse,rel_err_sigma,rel_err_tau,aid,seed\n";
  for (const auto& r : rows)
    text += r.dataset_id + "," + fmt(r.noise_level) + "," + std::to_string(r.n_train) + "," + r.variant + "," +
            fmt(r.rmse) + "," + opt(r.rel_err_sigma) + "," + opt(r.rel_err_tau) + "," + opt(r.aid) + "," +
            std::to_string(r.seed) + "\n";
  return text;
}

std::vector<AggregateRow> parse_aggregate_csv(std::string_view text) {
  const auto table = detail::parse_csv(text, "aggregate csv");
  const char* want[] = {"dataset_id", "noise_level", "n_train", "variant", "rmse",
                        "rel_err_sigma", "rel_err_tau", "aid", "seed"};
  std::vector<std::size_t> col;
  for (const char* name : want) {
    const auto c = table.column(name);
    if (c < 0) throw IoError(std::string("aggregate csv: missing column ") + name);
    col.push_back(static_cast<std::size_t>(c));
  }
  auto num = [](const std::string& s) {
    const auto v = detail::parse_double(s);
    if (!v) throw IoError("aggregate csv: bad number '" + s + "'");
    return *v;
  };
  auto maybe = [&](const std::string& s) { return s.empty() ? std::optional<double>() : num(s); };
  std::vector<AggregateRow> out;
  for (const auto& row : table.rows) {
    AggregateRow r;
    r.dataset_id = row[col[0]];
    r.noise_level = num(row[col[1]]);
    r.n_train = static_cast<long>(num(row[col[2]]));
    r.variant = row[col[3]];
    r.rmse = num(row[col[4]]);
    r.rel_err_sigma = maybe(row[col[5]]);
    r.rel_err_tau = maybe(row[col[6]]);
    r.aid = maybe(row[col[7]]);
    r.seed = std::stoull(row[col[8]]);
    out.push_back(std::move(r));
  }
  return out;
}

std::string failures_csv(const std::vector<FailureRow>& rows) {
  auto quote = [](const std::string& s) {
    std::string q = "\"";
    for (char ch : s) q += ch == '"' ? std::string("\"\"") : std::string(1, ch == '\n' ? ' ' : ch);
    return q + "\"";
  };
  std::string text = "dataset_id,noise_level,n_train,variant,status,reason\n";
  for (const auto& r : rows)
    text += r.dataset_id + "," + fmt(r.noise_level) + "," + std::to_string(r.n_train) + "," + r.variant + "," +
            r.status + "," + quote(r.reason) + "\n";
  return text;
}

double quantile(std::vector<double> v, double q) {
  if (v.empty()) throw ConfigError("quantile: no values");
  if (!(q >= 0.0 && q <= 1.0)) throw ConfigError("quantile: q must lie in [0, 1]");
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

std::string report_text(const std::vector<AggregateRow>& rows) {
  using Key = std::tuple<double, long, std::string>;
  std::vector<Key> keys;
  for (const auto& r : rows) {
    Key k{r.noise_level, r.n_train, r.variant};
    if (std::find(keys.begin(), keys.end(), k) == keys.end()) keys.push_back(k);
  }
  auto cell = [](const std::vector<double>& v) {
    char buf[64];
    if (v.empty()) return std::string("-");
    std::snprintf(buf, sizeof buf, "%.4g [%.4g, %.4g]", quantile(v, 0.5), quantile(v, 0.25), quantile(v, 0.75));
    return std::string(buf);
  };
  std::string out;
  char head[256];
  std::snprintf(head, sizeof head, "%-6s %-7s %-10s %-4s %-28s %-28s %-28s %-28s\n", "noise", "n_train", "variant",
                "n", "rmse", "aid", "rel_err_sigma", "rel_err_tau");
  out += head;
  for (const auto& [level, n, variant] : keys) {
    std::vector<double> rmse, aid, rs, rt;
    for (const auto& r : rows) {
      if (r.noise_level != level || r.n_train != n || r.variant != variant) continue;
      rmse.push_back(r.rmse);
      if (r.aid) aid.push_back(*r.aid);
      if (r.rel_err_sigma) rs.push_back(*r.rel_err_sigma);
      if (r.rel_err_tau) rt.push_back(*r.rel_err_tau);
    }
    char line[512];
    std::snprintf(line, sizeof line, "%-6s %-7ld %-10s %-4zu %-28s %-28s %-28s %-28s\n", fmt(level).c_str(), n,
                  variant.c_str(), rmse.size(), cell(rmse).c_str(), cell(aid).c_str(), cell(rs).c_str(),
                  cell(rt).c_str());
    out += line;
  }
  out += "(median [q25, q75])\n";
  return out;
}

// ---------------------------------------------------------------------------
// pilot

std::vector<Check> pilot_checks(const std::vector<AggregateRow>& rows) {
  std::vector<std::string> datasets;
  std::map<std::string, std::map<std::string, const AggregateRow*>> by_variant;  // variant -> dataset -> row
  for (const auto& r : rows) {
    if (std::find(datasets.begin(), datasets.end(), r.dataset_id) == datasets.end()) datasets.push_back(r.dataset_id);
    by_variant[r.variant][r.dataset_id] = &r;
  }
  auto values = [&](const std::string& variant, auto get) {
    std::vector<double> v;
    for (const auto& [id, row] : by_variant[variant])
      if (auto x = get(*row)) v.push_back(*x);
    return v;
  };
  auto rmse_of = [](const AggregateRow& r) { return std::optional<double>(r.rmse); };
  auto aid_of = [](const AggregateRow& r) { return r.aid; };
  auto median_or_nan = [](const std::vector<double>& v) { return v.empty() ? std::nan("") : quantile(v, 0.5); };
  char buf[256];
  std::vector<Check> out;

  {
    std::size_t wins = 0;
    for (const auto& id : datasets) {
      const auto* c = by_variant["ceme"].count(id) ? by_variant["ceme"][id] : nullptr;
      const auto* n = by_variant["naive"].count(id) ? by_variant["naive"][id] : nullptr;
      if (c && n && c->rmse < n->rmse) ++wins;
    }
    const auto need = static_cast<std::size_t>(std::ceil(0.8 * static_cast<double>(datasets.size()) - 1e-9));
    std::snprintf(buf, sizeof buf, "CEME rmse below Naive on %zu of %zu datasets (need %zu)", wins, datasets.size(),
                  need);
    out.push_back({"ceme_beats_naive_rmse", !datasets.empty() && wins >= need, buf});
  }
  {
    const double c = median_or_nan(values("ceme", aid_of));
    const double n = median_or_nan(values("naive", aid_of));
    std::snprintf(buf, sizeof buf, "median AID CEME %.4g vs Naive %.4g", c, n);
    out.push_back({"ceme_aid_below_naive", c < n, buf});
  }
  {
    const double o = median_or_nan(values("oracle", rmse_of));
    const double p = median_or_nan(values("ceme_plus", rmse_of));
    const double c = median_or_nan(values("ceme", rmse_of));
    std::snprintf(buf, sizeof buf, "median rmse Oracle %.4g, CEME+ %.4g, CEME %.4g (CEME+ limit %.4g)", o, p, c,
                  1.2 * c);
    out.push_back({"rmse_ordering", o < p && p <= 1.2 * c, buf});
  }
  {
    std::vector<double> abs_tau;
    for (double v : values("ceme", [](const AggregateRow& r) { return r.rel_err_tau; })) abs_tau.push_back(std::abs(v));
    const double m = median_or_nan(abs_tau);
    std::snprintf(buf, sizeof buf, "median |rel_err_tau| of CEME %.4g (limit 0.25)", m);
    out.push_back({"tau_recovery", m < 0.25, buf});
  }
  {
    const double m = median_or_nan(values("ceme", [](const AggregateRow& r) { return r.rel_err_sigma; }));
    std::snprintf(buf, sizeof buf, "median rel_err_sigma of CEME %.4g (range -0.1 to 0.5)", m);
    out.push_back({"sigma_recovery", m > -0.1 && m < 0.5, buf});
  }
  return out;
}

bool PilotResult::passed() const {
  return !checks.empty() && std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass; });
}

PilotResult run_pilot(const ExperimentConfig& cfg, Logger& log) {
  const auto gen = generate(cfg, {}, log);
  if (!gen.failures.empty()) throw GenerationError("pilot: " + gen.failures.front());
  train(cfg, {}, log);
  PilotResult result;
  result.eval = evaluate(cfg, {}, log);
  result.checks = pilot_checks(result.eval.rows);

  std::string text;
  for (const auto& c : result.checks) text += std::string(c.pass ? "PASS " : "FAIL ") + c.name + ": " + c.detail + "\n";
  detail::write_text_atomic(fs::path(cfg.out) / "pilot.txt", text);
  return result;
}

}  // namespace ceme::experiment
