#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "ceme/experiment/config.hpp"

namespace ceme::experiment {

/// One dataset of the grid. Synthetic ids look like "L0.2_n4000_r003",
/// semisynthetic ids are the level directories ("rho_0.40").
struct DatasetSpec {
  std::string id;
  double noise_level = 0.0;
  long n_train = 0;  // 0 for semisynthetic data until it is generated
  int replicate = 0;
};

std::vector<DatasetSpec> dataset_grid(const ExperimentConfig& cfg);

/// Stream seeds, all from the master seed:
///   dataset data      derive_seed(master, "<id>|data")
///   semisynthetic     derive_seed(master, "semisynthetic|data")
///   restart r         derive_seed(master, "<id>|<variant>|<r>|train")
///   evaluation        derive_seed(master, "<id>|eval"), shared by all variants
std::uint64_t data_seed(std::uint64_t master, const std::string& id);
std::uint64_t restart_seed(std::uint64_t master, const std::string& id, scm::Variant v, int restart);
std::uint64_t eval_seed(std::uint64_t master, const std::string& id);

/// `key=value` with key in {dataset_id, noise_level, n_train, replicate,
/// variant}; the value may be a comma-separated list of alternatives.
/// Different keys must all match.
struct Filter {
  std::string key;
  std::vector<std::string> values;
};
Filter parse_filter(std::string_view text);
bool matches(const std::vector<Filter>& filters, const DatasetSpec& d);
bool matches(const std::vector<Filter>& filters, const DatasetSpec& d, scm::Variant v);

/// Paths under the run directory.
struct Layout {
  std::filesystem::path root;

  std::filesystem::path manifest() const { return root / "manifest.json"; }
  std::filesystem::path dataset(const std::string& id) const { return root / "datasets" / id; }
  std::filesystem::path cell(const std::string& id, scm::Variant v) const;
  std::filesystem::path restart(const std::string& id, scm::Variant v, int r) const;
  std::filesystem::path result(const std::string& id, scm::Variant v) const;
  std::filesystem::path aggregate() const { return root / "aggregate.csv"; }
  std::filesystem::path failures() const { return root / "failures.csv"; }
  std::filesystem::path plots() const { return root / "plots"; }
};

/// Serialised progress messages; timestamps appear only here.
class Logger {
 public:
  explicit Logger(std::ostream* sink = nullptr) : sink_(sink) {}
  void info(const std::string& message);

 private:
  std::ostream* sink_;
  std::mutex mutex_;
};

/// Runs task(0..n-1) on `jobs` std::jthread workers (0: hardware threads).
/// Rethrows the first exception after every worker has finished.
void run_parallel(std::size_t n, int jobs, const std::function<void(std::size_t)>& task);

struct GenerateSummary {
  std::size_t written = 0;
  std::vector<std::string> failures;  // "<id>: <message>"
};

/// Writes datasets/<id>/{train,val,test}.csv, truth.json and manifest.json.
/// Rerunning rewrites identical bytes.
GenerateSummary generate(const ExperimentConfig& cfg, const std::vector<Filter>& filters, Logger& log);

struct TrainSummary {
  std::size_t cells = 0;
  std::size_t runs_trained = 0;
  std::size_t runs_resumed = 0;  // restarts found on disk
  std::size_t cells_done = 0;    // cells complete before this call
  std::size_t cells_skipped = 0;
  std::size_t cells_failed = 0;
};

/// Trains every (dataset, variant) cell: `restarts` fits each, then records
/// the chosen restart in cell.json. Completed cells and restarts already on
/// disk are reused. CEME+ is skipped on noise-free data.
TrainSummary train(const ExperimentConfig& cfg, const std::vector<Filter>& filters, Logger& log);

struct AggregateRow {
  std::string dataset_id;
  double noise_level = 0.0;
  long n_train = 0;
  std::string variant;
  double rmse = 0.0;
  std::optional<double> rel_err_sigma;
  std::optional<double> rel_err_tau;
  std::optional<double> aid;
  std::uint64_t seed = 0;  // seed of the chosen restart
};

struct FailureRow {
  std::string dataset_id;
  double noise_level = 0.0;
  long n_train = 0;
  std::string variant;
  std::string status;  // "failed", "skipped" or "missing"
  std::string reason;
};

struct EvalSummary {
  std::vector<AggregateRow> rows;
  std::vector<FailureRow> failures;
};

/// Evaluates each chosen model on its test set, writes results/<id>/<variant>.json
/// with a predictions CSV beside it, then aggregate.csv, failures.csv and plots/.
/// Rows follow grid order, variants in config order.
EvalSummary evaluate(const ExperimentConfig& cfg, const std::vector<Filter>& filters, Logger& log);

std::string aggregate_csv(const std::vector<AggregateRow>& rows);
std::vector<AggregateRow> parse_aggregate_csv(std::string_view text);
std::string failures_csv(const std::vector<FailureRow>& rows);

/// Linear-interpolation quantile of `v` (copied and sorted), q in [0, 1].
double quantile(std::vector<double> v, double q);

/// Median and quartiles of each metric per (noise level, n_train, variant).
std::string report_text(const std::vector<AggregateRow>& rows);

struct Check {
  std::string name;
  bool pass = false;
  std::string detail;
};

/// Ordering and noise-scale checks on pilot results:
///   CEME beats Naive on rmse on at least 80% of the datasets;
///   median AID of CEME below Naive's;
///   median rmse Oracle < CEME+ and CEME+ <= 1.2 * CEME;
///   median |rel_err_tau| of CEME below 0.25;
///   median rel_err_sigma of CEME inside (-0.1, 0.5).
std::vector<Check> pilot_checks(const std::vector<AggregateRow>& rows);

struct PilotResult {
  EvalSummary eval;
  std::vector<Check> checks;
  bool passed() const;
};

/// generate, train and evaluate `cfg` (normally pilot_config()), then check.
PilotResult run_pilot(const ExperimentConfig& cfg, Logger& log);

}  // namespace ceme::experiment
