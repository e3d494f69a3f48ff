#include "ceme/vi/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include "ceme/error.hpp"
#include "ceme/nnet/adam.hpp"
#include "ceme/vi/iw_elbo.hpp"
#include "json_io.hpp"

namespace ceme::vi {

namespace {

constexpr Eigen::Index kEvalChunk = 1024;

void scale(scm::CemeGradient& g, double f) {
  g.mu_xstar *= f;
  g.sigma_xstar *= f;
  g.mu_y *= f;
  g.encoder_mu *= f;
  g.encoder_sigma *= f;
  g.tau_raw *= f;
  g.sigma_raw *= f;
}

nnet::AdamOptions adam_options(const TrainConfig& cfg, double lr) {
  return {lr, cfg.beta1, cfg.beta2, cfg.adam_epsilon, cfg.weight_decay};
}

// Shared epoch loop. `Ops` supplies:
//   params(Model&)                       -> vector<ParamView>
//   step(const Model&, batch, beta, rng) -> loss to minimise (per point); keeps its gradient
//   grads(const Model&)                  -> vector<GradView> of the last step
//   score(const Model&)                  -> validation score, lower is better
//   finite(const Model&)                 -> bool
template <typename Model, typename Ops>
RunRecord optimise(Model& model, const Dataset& train, const TrainConfig& cfg, Ops& ops) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  RunRecord rec;
  rec.seed = cfg.seed;
  Rng rng(derive_seed(cfg.seed, "run"));

  const Eigen::Index n = train.size();
  if (n == 0) throw ConfigError("training set is empty");

  auto safe_score = [&](const Model& m) {
    try {
      const double s = ops.score(m);
      return std::isfinite(s) ? s : std::numeric_limits<double>::infinity();
    } catch (const NumericalError&) {
      return std::numeric_limits<double>::infinity();
    }
  };

  rec.initial_validation_score = safe_score(model);
  rec.best_validation_score = rec.initial_validation_score;
  Model best = model;

  double lr = cfg.learning_rate;
  auto params = ops.params(model);
  auto adam = nnet::AdamState::for_parameters(params, adam_options(cfg, lr));

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  const Eigen::Index bs = std::min<Eigen::Index>(cfg.batch_size, n);

  int since_best_lr = 0;
  int since_best_stop = 0;
  rec.stop_reason = cfg.max_epochs == 0 ? StopReason::zero_budget : StopReason::max_epochs;

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    const double beta = anneal_weight(epoch, cfg);
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    Eigen::Index seen = 0;
    bool diverged = false;
    std::string why;

    for (Eigen::Index start = 0; start < n; start += bs) {
      const Eigen::Index len = std::min(bs, n - start);
      const Dataset batch = train.subset(std::span<const Eigen::Index>(order.data() + start, len));
      double loss = 0.0;
      try {
        loss = ops.step(model, batch, beta, rng);
      } catch (const NumericalError& e) {
        diverged = true;
        why = e.what();
        break;
      }
      if (!std::isfinite(loss)) {
        diverged = true;
        why = "non-finite training loss";
        break;
      }
      const auto grads = ops.grads(model);
      nnet::adam_step(params, grads, adam);
      if (!ops.finite(model)) {
        diverged = true;
        why = "non-finite parameters after an optimiser step";
        break;
      }
      loss_sum += loss * static_cast<double>(len);
      seen += len;
    }

    if (diverged) {
      model = best;
      params = ops.params(model);
      if (rec.recoveries >= 1) {
        rec.failed = true;
        rec.failure_message = "diverged at epoch " + std::to_string(epoch) + ": " + why;
        rec.stop_reason = StopReason::diverged;
        break;
      }
      ++rec.recoveries;
      lr *= cfg.lr_factor;
      adam = nnet::AdamState::for_parameters(params, adam_options(cfg, lr));
      since_best_lr = 0;
      continue;
    }

    const double val = safe_score(model);
    rec.train_loss.push_back(loss_sum / static_cast<double>(seen));
    rec.validation_score.push_back(val);
    rec.learning_rate.push_back(lr);

    if (val < rec.best_validation_score) {
      rec.best_validation_score = val;
      rec.best_epoch = epoch;
      best = model;
      since_best_lr = 0;
      since_best_stop = 0;
    } else {
      ++since_best_lr;
      ++since_best_stop;
      if (since_best_stop >= cfg.early_stop_patience) {
        rec.stop_reason = StopReason::early_stopping;
        break;
      }
      if (since_best_lr >= cfg.lr_patience) {
        lr *= cfg.lr_factor;
        adam.options.learning_rate = lr;
        since_best_lr = 0;
      }
    }
  }

  model = std::move(best);
  if (!std::isfinite(rec.best_validation_score) && !rec.failed) {
    rec.failed = true;
    rec.failure_message = "validation score never finite";
  }
  rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rec;
}

struct CemeOps {
  const TrainConfig& cfg;
  std::uint64_t eval_seed;
  const Dataset& val;
  scm::CemeGradient grad;

  std::vector<nnet::ParamView> params(scm::CemeModel& m) { return m.parameters(); }
  double step(const scm::CemeModel& m, const Dataset& batch, double beta, Rng& rng) {
    const double value = iw_elbo(m, batch, cfg.n_importance_samples, beta, rng, &grad);
    const double b = static_cast<double>(batch.size());
    scale(grad, -1.0 / b);
    return -value / b;
  }
  std::vector<nnet::GradView> grads(const scm::CemeModel& m) const { return m.gradient_views(grad); }
  double score(const scm::CemeModel& m) const {
    return ceme_validation_score(m, val, cfg.n_importance_samples, eval_seed);
  }
  bool finite(const scm::CemeModel& m) const { return m.all_finite(); }
};

struct RegressorOps {
  const Dataset& val;
  nnet::MlpGradient grad;

  std::vector<nnet::ParamView> params(scm::Regressor& r) { return r.mu_y_net.parameters(true); }
  double step(const scm::Regressor& r, const Dataset& batch, double, Rng&) { return mse_loss(r, batch, &grad); }
  std::vector<nnet::GradView> grads(const scm::Regressor&) const { return grad.views(); }
  double score(const scm::Regressor& r) const { return mse_loss(r, val); }
  bool finite(const scm::Regressor& r) const { return r.mu_y_net.all_finite(); }
};

}  // namespace

std::string_view to_string(StopReason r) {
  switch (r) {
    case StopReason::zero_budget: return "zero_budget";
    case StopReason::early_stopping: return "early_stopping";
    case StopReason::max_epochs: return "max_epochs";
    case StopReason::diverged: return "diverged";
  }
  return "unknown";
}

namespace {
StopReason parse_stop_reason(std::string_view s) {
  for (auto r : {StopReason::zero_budget, StopReason::early_stopping, StopReason::max_epochs, StopReason::diverged})
    if (to_string(r) == s) return r;
  throw IoError("run record: unknown stop reason '" + std::string(s) + "'");
}

// JSON has no infinity; a score that never became finite is stored as null.
detail::json num(double v) { return std::isfinite(v) ? detail::json(v) : detail::json(nullptr); }
double num(const detail::json& j) {
  return j.is_null() ? std::numeric_limits<double>::infinity() : j.get<double>();
}
}  // namespace

std::string to_json(const RunRecord& r) {
  detail::json j;
  j["format"] = "ceme-run-v1";
  auto series = [](const std::vector<double>& v) {
    detail::json a = detail::json::array();
    for (double x : v) a.push_back(num(x));
    return a;
  };
  j["train_loss"] = series(r.train_loss);
  j["validation_score"] = series(r.validation_score);
  j["learning_rate"] = r.learning_rate;
  j["initial_validation_score"] = num(r.initial_validation_score);
  j["best_validation_score"] = num(r.best_validation_score);
  j["best_epoch"] = r.best_epoch;
  j["stop_reason"] = std::string(to_string(r.stop_reason));
  j["failed"] = r.failed;
  j["failure_message"] = r.failure_message;
  j["recoveries"] = r.recoveries;
  j["seed"] = r.seed;
  return j.dump();
}

RunRecord run_record_from_json(std::string_view text) {
  const auto j = detail::parse_json(text, "run record");
  try {
    if (j.at("format").get<std::string>() != "ceme-run-v1") throw IoError("run record: unknown format tag");
    RunRecord r;
    auto series = [](const detail::json& a) {
      std::vector<double> v;
      for (const auto& x : a) v.push_back(num(x));
      return v;
    };
    r.train_loss = series(j.at("train_loss"));
    r.validation_score = series(j.at("validation_score"));
    r.learning_rate = j.at("learning_rate").get<std::vector<double>>();
    r.initial_validation_score = num(j.at("initial_validation_score"));
    r.best_validation_score = num(j.at("best_validation_score"));
    r.best_epoch = j.at("best_epoch").get<int>();
    r.stop_reason = parse_stop_reason(j.at("stop_reason").get<std::string>());
    r.failed = j.at("failed").get<bool>();
    r.failure_message = j.at("failure_message").get<std::string>();
    r.recoveries = j.at("recoveries").get<int>();
    r.seed = j.at("seed").get<std::uint64_t>();
    return r;
  } catch (const detail::json::exception& e) {
    throw IoError(std::string("run record: ") + e.what());
  }
}

double anneal_weight(int epoch, const TrainConfig& cfg) {
  const double t = std::min(1.0, static_cast<double>(epoch) / static_cast<double>(cfg.anneal_epochs));
  return cfg.initial_term_weight + (1.0 - cfg.initial_term_weight) * t;
}

double ceme_validation_score(const scm::CemeModel& model, const Dataset& val, int k, std::uint64_t eval_seed) {
  const Eigen::Index n = val.size();
  if (n == 0) throw ConfigError("validation set is empty");
  Rng rng(eval_seed);
  const Eigen::MatrixXd eps = standard_normal(k, n, rng);
  double total = 0.0;
  std::vector<Eigen::Index> idx;
  for (Eigen::Index start = 0; start < n; start += kEvalChunk) {
    const Eigen::Index len = std::min(kEvalChunk, n - start);
    idx.resize(static_cast<std::size_t>(len));
    std::iota(idx.begin(), idx.end(), start);
    total += iw_elbo(model, val.subset(idx), eps.middleCols(start, len), 1.0);
  }
  return -total / static_cast<double>(n);
}

RunRecord train_ceme(scm::CemeModel& model, const Dataset& train, const Dataset& val, const TrainConfig& cfg) {
  CemeOps ops{cfg, derive_seed(cfg.seed, "validation"), val, model.zero_gradient()};
  return optimise(model, train, cfg, ops);
}

RunRecord train_regressor(scm::Regressor& reg, const Dataset& train, const Dataset& val, const TrainConfig& cfg) {
  if (reg.variant == scm::Variant::oracle && (!train.has_x_star() || !val.has_x_star()))
    throw ConfigError("the oracle regressor needs the true treatment in train and validation data");
  RegressorOps ops{val, reg.mu_y_net.zero_gradient()};
  RunRecord rec = optimise(reg, train, cfg, ops);
  reg.sigma_hat = std::sqrt(mse_loss(reg, train));
  return rec;
}

TrainedRun fit_variant(scm::Variant variant, const Dataset& train, const Dataset& val, const TrainConfig& cfg,
                       std::optional<double> known_tau) {
  train.validate();
  val.validate();
  if (train.size() < 2) throw ConfigError("need at least two training rows");
  Rng init(derive_seed(cfg.seed, "init"));
  const int d = train.covariate_dim();
  if (scm::is_latent(variant)) {
    std::optional<double> fixed;
    if (variant == scm::Variant::ceme_plus) {
      if (!known_tau || !(*known_tau > 0.0)) throw ConfigError("CEME+ needs a positive known tau");
      fixed = known_tau;
    }
    scm::CemeModel m(d, cfg.network, init, 0.5 * sample_sd(train.x), 0.5 * sample_sd(train.y), fixed);
    RunRecord rec = train_ceme(m, train, val, cfg);
    return {scm::FittedModel(std::move(m)), std::move(rec)};
  }
  scm::Regressor r(variant, d, cfg.network, init);
  RunRecord rec = train_regressor(r, train, val, cfg);
  return {scm::FittedModel(std::move(r)), std::move(rec)};
}

std::size_t choose_best(std::span<const RunRecord> records) {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].failed) continue;
    if (!best || records[i].best_validation_score < records[*best].best_validation_score) best = i;
  }
  if (!best) throw Error("every restart failed");
  return *best;
}

RestartResult best_of_restarts(scm::Variant variant, const Dataset& train, const Dataset& val, const TrainConfig& cfg,
                               std::optional<double> known_tau) {
  cfg.validate();
  RestartResult out;
  std::vector<RunRecord> records;
  for (int r = 0; r < cfg.restarts; ++r) {
    TrainConfig c = cfg;
    c.seed = derive_seed(cfg.seed, "restart" + std::to_string(r));
    out.runs.push_back(fit_variant(variant, train, val, c, known_tau));
    records.push_back(out.runs.back().record);
  }
  out.chosen = choose_best(records);
  return out;
}

}  // namespace ceme::vi
