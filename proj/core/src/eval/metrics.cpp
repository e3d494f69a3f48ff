#include "ceme/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "ceme/error.hpp"
#include "csv.hpp"
#include "json_io.hpp"

namespace ceme::eval {

namespace {

const Eigen::VectorXd& scored_treatment(const scm::FittedModel& model, const Dataset& test, NaiveInput naive_input) {
  if (model.variant() == scm::Variant::naive && naive_input == NaiveInput::observed) return test.x;
  return test.x_star;
}

double standard_normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }

// sum_k w_k N(y | m_k, sigma^2) for every y.
Eigen::VectorXd weighted_mixture(const Eigen::VectorXd& means, const Eigen::VectorXd& weights, double sigma,
                                 const Eigen::VectorXd& y) {
  const double inv = 1.0 / (2.0 * sigma * sigma);
  const double norm = 1.0 / (sigma * std::sqrt(2.0 * std::numbers::pi));
  Eigen::VectorXd out(y.size());
  for (Eigen::Index k = 0; k < y.size(); ++k)
    out(k) = norm * (weights.array() * (-(means.array() - y(k)).square() * inv).exp()).sum();
  return out;
}

}  // namespace

double rmse(const Eigen::VectorXd& estimate, const Eigen::VectorXd& truth) {
  if (estimate.size() != truth.size()) throw ShapeError("rmse: length mismatch");
  if (estimate.size() == 0) throw ConfigError("rmse: empty input");
  return std::sqrt((estimate - truth).squaredNorm() / static_cast<double>(estimate.size()));
}

double rel_error(double estimate, double truth) {
  if (!(truth > 0.0)) throw ConfigError("rel_error: truth must be positive");
  return (estimate - truth) / truth;
}

double rmse_mu_y(const scm::FittedModel& model, const CausalTruth& truth, const Dataset& test,
                 NaiveInput naive_input) {
  test.validate();
  if (test.size() == 0) throw ConfigError("rmse_mu_y: empty test set");
  if (!test.has_x_star()) throw ConfigError("rmse_mu_y: test set lacks the true treatment");
  return rmse(model.mu_y(test.z, scored_treatment(model, test, naive_input)), truth.mu_y(test.z, test.x_star));
}

Eigen::VectorXd truth_interventional_density(const CausalTruth& truth, double x_star, const Eigen::VectorXd& y_grid,
                                             const QuadratureOptions& quad, const Eigen::MatrixXd* z_sample) {
  if (!(truth.sigma() > 0.0)) throw ConfigError("truth_interventional_density: true sigma must be positive");
  if (truth.standard_normal_covariate()) {
    if (quad.z_nodes < 2 || !(quad.z_bound > 0.0)) throw ConfigError("truth_interventional_density: bad quadrature");
    const Eigen::VectorXd nodes = Eigen::VectorXd::LinSpaced(quad.z_nodes, -quad.z_bound, quad.z_bound);
    const double h = nodes(1) - nodes(0);
    Eigen::VectorXd w(quad.z_nodes);
    for (int k = 0; k < quad.z_nodes; ++k)
      w(k) = (k == 0 || k + 1 == quad.z_nodes ? 0.5 * h : h) * standard_normal_pdf(nodes(k));
    const Eigen::VectorXd means =
        truth.mu_y(nodes.transpose(), Eigen::VectorXd::Constant(quad.z_nodes, x_star));
    return weighted_mixture(means, w, truth.sigma(), y_grid);
  }
  if (z_sample == nullptr || z_sample->cols() == 0)
    throw ConfigError("truth_interventional_density: multivariate covariates need a z sample");
  const Eigen::VectorXd means = truth.mu_y(*z_sample, Eigen::VectorXd::Constant(z_sample->cols(), x_star));
  return scm::mixture_density(means, truth.sigma(), y_grid);
}

double average_interventional_distance(const DensityFn& model, const DensityFn& truth,
                                       const Eigen::VectorXd& x_star_values, double y_min, double y_max, int n_y,
                                       std::uint64_t seed) {
  if (x_star_values.size() == 0) throw ConfigError("aid: no treatment values");
  if (!(y_max > y_min)) throw ConfigError("aid: degenerate y range");
  if (n_y < 1) throw ConfigError("aid: need at least one y draw");
  const double width = y_max - y_min;
  double total = 0.0;
  for (Eigen::Index t = 0; t < x_star_values.size(); ++t) {
    Rng rng(derive_seed(seed, "aid" + std::to_string(t)));
    std::uniform_real_distribution<double> unif(y_min, y_max);
    Eigen::VectorXd y(n_y);
    for (int k = 0; k < n_y; ++k) y(k) = unif(rng);
    std::sort(y.begin(), y.end());  // density routines expect an increasing grid
    const Eigen::VectorXd p = model(x_star_values(t), y);
    const Eigen::VectorXd q = truth(x_star_values(t), y);
    total += width * (p - q).cwiseAbs().mean();
  }
  return total / static_cast<double>(x_star_values.size());
}

AidResult aid(const scm::FittedModel& model, const CausalTruth& truth, const Dataset& test,
              const AidOptions& options, const QuadratureOptions& quad) {
  test.validate();
  if (test.size() == 0) throw ConfigError("aid: empty test set");
  if (!test.has_x_star()) throw ConfigError("aid: test set lacks the true treatment");
  if (options.n_treatment < 1 || !(options.range_pad >= 0.0)) throw ConfigError("aid: invalid options");

  AidResult r;
  const double lo = test.y.minCoeff(), hi = test.y.maxCoeff();
  if (!(hi > lo)) throw ConfigError("aid: degenerate y range");
  r.y_min = lo - options.range_pad * (hi - lo);
  r.y_max = hi + options.range_pad * (hi - lo);
  r.n_treatment = static_cast<int>(std::min<Eigen::Index>(options.n_treatment, test.size()));

  const Eigen::MatrixXd& z = test.z;
  const DensityFn model_density = [&](double xs, const Eigen::VectorXd& y) {
    return scm::interventional_density(model, xs, y, z);
  };
  const DensityFn truth_density = [&](double xs, const Eigen::VectorXd& y) {
    return truth_interventional_density(truth, xs, y, quad, &z);
  };
  r.value = average_interventional_distance(model_density, truth_density, test.x_star.head(r.n_treatment), r.y_min,
                                            r.y_max, options.n_y, options.seed);
  return r;
}

MetricReport evaluate(const scm::FittedModel& model, const CausalTruth& truth, const Dataset& test,
                      const EvalOptions& options, Predictions* predictions) {
  test.validate();
  if (test.size() == 0) throw ConfigError("evaluate: empty test set");
  if (!test.has_x_star()) throw ConfigError("evaluate: test set lacks the true treatment");
  if (test.covariate_dim() + 1 != (model.latent() ? model.latent()->mu_y_net.input_size()
                                                  : model.regressor()->mu_y_net.input_size()))
    throw ShapeError("evaluate: model and test set disagree on the covariate width");

  MetricReport rep;
  rep.variant = std::string(scm::to_string(model.variant()));
  rep.n_test = static_cast<long>(test.size());
  rep.eval_seed = options.aid.seed;

  Predictions pred;
  pred.model_mu_y = model.mu_y(test.z, scored_treatment(model, test, options.naive_input));
  pred.truth_mu_y = truth.mu_y(test.z, test.x_star);
  rep.rmse_mu_y = rmse(pred.model_mu_y, pred.truth_mu_y);

  if (truth.sigma() > 0.0) rep.rel_err_sigma = rel_error(model.sigma(), truth.sigma());
  if (const auto tau = model.learned_tau(); tau && truth.tau() > 0.0) rep.rel_err_tau = rel_error(*tau, truth.tau());

  rep.truth_integration = truth.standard_normal_covariate() ? "trapezoid" : "monte_carlo";
  rep.z_sample_size = static_cast<long>(test.size());
  rep.n_y = options.aid.n_y;
  if (truth.standard_normal_covariate()) {
    rep.z_nodes = options.quadrature.z_nodes;
    rep.z_bound = options.quadrature.z_bound;
  }
  if (truth.sigma() > 0.0 && model.sigma() > 0.0) {
    const AidResult a = aid(model, truth, test, options.aid, options.quadrature);
    rep.aid = a.value;
    rep.y_min = a.y_min;
    rep.y_max = a.y_max;
    rep.n_treatment = a.n_treatment;
  }
  if (predictions) *predictions = std::move(pred);
  return rep;
}

namespace {
detail::json opt(const std::optional<double>& v) { return v ? detail::json(*v) : detail::json(nullptr); }
std::optional<double> opt(const detail::json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}
}  // namespace

std::string to_json(const MetricReport& r) {
  detail::json j;
  j["format"] = "ceme-metrics-v1";
  j["variant"] = r.variant;
  j["rmse_mu_y"] = r.rmse_mu_y;
  j["rel_err_sigma"] = opt(r.rel_err_sigma);
  j["rel_err_tau"] = opt(r.rel_err_tau);
  j["aid"] = opt(r.aid);
  j["n_test"] = r.n_test;
  j["quadrature"] = {{"y_min", r.y_min},
                     {"y_max", r.y_max},
                     {"n_y", r.n_y},
                     {"n_treatment", r.n_treatment},
                     {"z_sample_size", r.z_sample_size},
                     {"truth_integration", r.truth_integration},
                     {"z_nodes", r.z_nodes},
                     {"z_bound", r.z_bound},
                     {"eval_seed", r.eval_seed}};
  return j.dump(2);
}

MetricReport metric_report_from_json(std::string_view text) {
  const auto j = detail::parse_json(text, "metric report");
  try {
    if (j.at("format").get<std::string>() != "ceme-metrics-v1") throw IoError("metric report: unknown format");
    MetricReport r;
    r.variant = j.at("variant").get<std::string>();
    r.rmse_mu_y = j.at("rmse_mu_y").get<double>();
    r.rel_err_sigma = opt(j.at("rel_err_sigma"));
    r.rel_err_tau = opt(j.at("rel_err_tau"));
    r.aid = opt(j.at("aid"));
    r.n_test = j.at("n_test").get<long>();
    const auto& q = j.at("quadrature");
    r.y_min = q.at("y_min").get<double>();
    r.y_max = q.at("y_max").get<double>();
    r.n_y = q.at("n_y").get<int>();
    r.n_treatment = q.at("n_treatment").get<int>();
    r.z_sample_size = q.at("z_sample_size").get<long>();
    r.truth_integration = q.at("truth_integration").get<std::string>();
    r.z_nodes = q.at("z_nodes").get<int>();
    r.z_bound = q.at("z_bound").get<double>();
    r.eval_seed = q.at("eval_seed").get<std::uint64_t>();
    return r;
  } catch (const detail::json::exception& e) {
    throw IoError(std::string("metric report: ") + e.what());
  }
}

std::string predictions_csv(const Predictions& p) {
  if (p.model_mu_y.size() != p.truth_mu_y.size()) throw ShapeError("predictions_csv: length mismatch");
  std::string out = "model_mu_y,truth_mu_y\n";
  for (Eigen::Index i = 0; i < p.model_mu_y.size(); ++i) {
    out += detail::format_double(p.model_mu_y(i));
    out += ',';
    out += detail::format_double(p.truth_mu_y(i));
    out += '\n';
  }
  return out;
}

Predictions predictions_from_csv(std::string_view text) {
  const auto table = detail::parse_csv(text, "predictions");
  const auto cm = table.column("model_mu_y"), ct = table.column("truth_mu_y");
  if (cm < 0 || ct < 0) throw IoError("predictions: missing columns");
  Predictions p;
  const auto n = static_cast<Eigen::Index>(table.rows.size());
  p.model_mu_y.resize(n);
  p.truth_mu_y.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& row = table.rows[static_cast<std::size_t>(i)];
    const auto a = detail::parse_double(row[static_cast<std::size_t>(cm)]);
    const auto b = detail::parse_double(row[static_cast<std::size_t>(ct)]);
    if (!a || !b) throw IoError("predictions: bad number on row " + std::to_string(i + 1));
    p.model_mu_y(i) = *a;
    p.truth_mu_y(i) = *b;
  }
  return p;
}

}  // namespace ceme::eval
