// ceme: generate datasets, train variants, evaluate and summarise.

#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ceme/error.hpp"
#include "ceme/experiment/config.hpp"
#include "ceme/experiment/runner.hpp"

namespace {

namespace ex = ceme::experiment;

enum Exit { ok = 0, threshold_failed = 1, usage = 2, internal = 3 };

struct Common {
  std::string config;
  std::vector<std::string> filters;
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
  std::string out;
  bool quiet = false;
};

void add_common(CLI::App* cmd, Common& c, bool config_required) {
  auto* opt = cmd->add_option("--config", c.config, "experiment config (JSON)");
  if (config_required) opt->required()->check(CLI::ExistingFile);
  cmd->add_option("--filter", c.filters, "restrict to key=value (dataset_id, noise_level, n_train, replicate, variant)");
  cmd->add_option("--seed", c.seed, "master seed (overrides the config)");
  cmd->add_option("--jobs", c.jobs, "worker threads, 0 = all cores")->check(CLI::NonNegativeNumber);
  cmd->add_option("--out", c.out, "run directory (overrides the config)");
  cmd->add_flag("-q,--quiet", c.quiet, "no progress log on stderr");
}

ex::ExperimentConfig resolve(const Common& c, ex::ExperimentConfig base) {
  if (c.seed) base.seed = *c.seed;
  if (c.jobs) base.jobs = *c.jobs;
  if (!c.out.empty()) base.out = c.out;
  base.validate();
  return base;
}

std::vector<ex::Filter> filters_of(const Common& c) {
  std::vector<ex::Filter> out;
  for (const auto& f : c.filters) out.push_back(ex::parse_filter(f));
  return out;
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ceme::IoError("cannot read " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int print_checks(const ex::PilotResult& r) {
  for (const auto& c : r.checks) std::cout << (c.pass ? "PASS " : "FAIL ") << c.name << ": " << c.detail << "\n";
  std::cout << "cells evaluated: " << r.eval.rows.size() << ", failed or skipped: " << r.eval.failures.size() << "\n";
  std::cout << (r.passed() ? "pilot passed" : "pilot FAILED") << std::endl;
  return r.passed() ? ok : threshold_failed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Causal effect estimation under treatment measurement error"};
  app.require_subcommand(1);

  Common gen, trn, evl, pil, rep;
  auto* c_gen = app.add_subcommand("generate", "materialise every dataset of the grid");
  add_common(c_gen, gen, true);
  auto* c_trn = app.add_subcommand("train", "fit each (dataset, variant) cell with restarts; resumable");
  add_common(c_trn, trn, true);
  auto* c_evl = app.add_subcommand("evaluate", "score the chosen runs and write aggregate.csv");
  add_common(c_evl, evl, true);
  auto* c_pil = app.add_subcommand("pilot", "desk-scale end-to-end run with pass/fail checks");
  add_common(c_pil, pil, false);
  bool print_config = false;
  c_pil->add_flag("--print-config", print_config, "print the pilot config and exit");
  auto* c_rep = app.add_subcommand("report", "summarise aggregate.csv of a run directory");
  add_common(c_rep, rep, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? ok : usage;
  }

  try {
    auto pick = [](const Common& c) { return ceme::experiment::load_config(c.config); };
    if (c_gen->parsed()) {
      const auto cfg = resolve(gen, pick(gen));
      ex::Logger log(gen.quiet ? nullptr : &std::cerr);
      const auto s = ex::generate(cfg, filters_of(gen), log);
      std::cout << "datasets written: " << s.written << ", failed: " << s.failures.size() << "\n";
      for (const auto& f : s.failures) std::cout << "  " << f << "\n";
      return s.failures.empty() ? ok : internal;
    }
    if (c_trn->parsed()) {
      const auto cfg = resolve(trn, pick(trn));
      ex::Logger log(trn.quiet ? nullptr : &std::cerr);
      const auto s = ex::train(cfg, filters_of(trn), log);
      std::cout << "cells: " << s.cells << " (already complete " << s.cells_done << ", skipped " << s.cells_skipped
                << ", failed " << s.cells_failed << "), runs trained: " << s.runs_trained
                << ", resumed: " << s.runs_resumed << "\n";
      return ok;
    }
    if (c_evl->parsed()) {
      const auto cfg = resolve(evl, pick(evl));
      ex::Logger log(evl.quiet ? nullptr : &std::cerr);
      const auto s = ex::evaluate(cfg, filters_of(evl), log);
      std::cout << "rows: " << s.rows.size() << ", failed or skipped cells: " << s.failures.size() << "\n"
                << "wrote " << (cfg.out / "aggregate.csv").string() << "\n";
      return ok;
    }
    if (c_pil->parsed()) {
      auto base = pil.config.empty() ? ex::pilot_config() : pick(pil);
      const auto cfg = resolve(pil, base);
      if (print_config) {
        std::cout << ex::to_json(cfg);
        return ok;
      }
      if (!pil.filters.empty()) throw ceme::ConfigError("pilot does not take filters");
      ex::Logger log(pil.quiet ? nullptr : &std::cerr);
      return print_checks(ex::run_pilot(cfg, log));
    }
    if (c_rep->parsed()) {
      std::filesystem::path dir = rep.out;
      if (dir.empty()) {
        if (rep.config.empty()) throw ceme::ConfigError("report needs --out or --config");
        dir = pick(rep).out;
      }
      auto rows = ex::parse_aggregate_csv(read_file(dir / "aggregate.csv"));
      std::vector<ex::AggregateRow> kept;
      const auto filters = filters_of(rep);
      for (auto& r : rows) {
        const ex::DatasetSpec d{r.dataset_id, r.noise_level, r.n_train, 0};
        bool keep = true;
        for (const auto& f : filters) {
          if (f.key == "replicate") throw ceme::ConfigError("report cannot filter on replicate");
          if (f.key == "variant") {
            keep = keep && std::find(f.values.begin(), f.values.end(), r.variant) != f.values.end();
          } else {
            keep = keep && ex::matches({f}, d);
          }
        }
        if (keep) kept.push_back(std::move(r));
      }
      std::cout << ex::report_text(kept);
      return ok;
    }
  } catch (const ceme::ConfigError& e) {
    std::cerr << "ceme: " << e.what() << "\n";
    return usage;
  } catch (const std::exception& e) {
    std::cerr << "ceme: " << e.what() << "\n";
    return internal;
  }
  return usage;
}
