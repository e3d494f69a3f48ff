#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "doctest.h"

#include "ceme/error.hpp"
#include "ceme/gpdata/generator.hpp"
#include "ceme/vi/iw_elbo.hpp"
#include "ceme/vi/trainer.hpp"
#include "gradcheck.hpp"
#include "toys.hpp"

using namespace ceme;

namespace {

Dataset random_batch(int d, Eigen::Index n, Rng& rng) {
  Dataset b;
  b.z = standard_normal(d, n, rng);
  b.x = standard_normal(n, 1, rng);
  b.y = standard_normal(n, 1, rng);
  return b;
}

Dataset toy_batch(const testing::LinearToy& t, Eigen::Index n, Rng& rng) {
  Dataset b;
  b.z = standard_normal(1, n, rng);
  b.x_star.resize(n);
  b.x.resize(n);
  b.y.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double z = b.z(0, i);
    b.x_star(i) = t.a * z + t.b + t.s * standard_normal(rng);
    b.x(i) = b.x_star(i) + t.tau * standard_normal(rng);
    b.y(i) = t.c * z + t.d * b.x_star(i) + t.e + t.sigma * standard_normal(rng);
  }
  return b;
}

scm::CemeModel random_model(int d, Rng& rng, std::optional<double> fixed = std::nullopt) {
  scm::CemeModel m(d, scm::NetworkShape{}, rng, 0.8, 0.6, fixed);
  // Non-zero biases so every parameter is exercised.
  for (auto* net : {&m.mu_xstar_net, &m.sigma_xstar_net, &m.mu_y_net, &m.encoder_mu_net, &m.encoder_sigma_net})
    for (std::size_t l = 0; l < net->num_layers(); ++l)
      net->bias(l) = 0.2 * standard_normal(net->bias(l).size(), 1, rng);
  return m;
}

double toy_log_marginal(const testing::LinearToy& t, const Dataset& b) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < b.size(); ++i) s += t.log_marginal(b.z(0, i), b.x(i), b.y(i));
  return s;
}

const Dataset& small_synthetic() {
  static const gpdata::SyntheticBundle bundle = gpdata::dataset_bundle(300, 200, 10, 0.2, 42);
  return bundle.splits[0];
}
const Dataset& small_synthetic_val() {
  static const gpdata::SyntheticBundle bundle = gpdata::dataset_bundle(300, 200, 10, 0.2, 42);
  return bundle.splits[1];
}

vi::TrainConfig quick_config(int epochs) {
  vi::TrainConfig cfg;
  cfg.max_epochs = epochs;
  cfg.n_importance_samples = 8;
  cfg.seed = 7;
  cfg.restarts = 1;
  cfg.network.hidden_width = 10;
  cfg.network.hidden_layers = 2;
  return cfg;
}

}  // namespace

TEST_CASE("iw_elbo gradient matches finite differences (K=4, beta=2, batch 8)") {
  Rng rng(2024);
  scm::CemeModel m = random_model(1, rng);
  const Dataset batch = random_batch(1, 8, rng);
  const Eigen::MatrixXd eps = standard_normal(4, 8, rng);
  scm::CemeGradient g;
  vi::iw_elbo(m, batch, eps, 2.0, &g);
  const auto params = m.parameters();
  const auto views = m.gradient_views(g);
  REQUIRE(params.size() == views.size());
  const auto r = testing::check_gradient(params, views, [&] { return vi::iw_elbo(m, batch, eps, 2.0); });
  CAPTURE(r.worst_tensor);
  CAPTURE(r.worst_index);
  CAPTURE(r.max_abs_error);
  CHECK(r.max_rel_error < 1e-4);
}

TEST_CASE("iw_elbo gradient with multivariate covariates and fixed tau") {
  Rng rng(77);
  scm::CemeModel m = random_model(3, rng, 0.5);
  const Dataset batch = random_batch(3, 5, rng);
  const Eigen::MatrixXd eps = standard_normal(3, 5, rng);
  scm::CemeGradient g;
  vi::iw_elbo(m, batch, eps, 1.0, &g);
  const auto params = m.parameters();
  const auto views = m.gradient_views(g);
  const auto r = testing::check_gradient(params, views, [&] { return vi::iw_elbo(m, batch, eps, 1.0); });
  CHECK(r.max_rel_error < 1e-4);
  CHECK(g.tau_raw == 0.0);
}

TEST_CASE("iw_elbo with K=1 and beta=1 is the standard ELBO") {
  Rng rng(9);
  scm::CemeModel m = random_model(1, rng);
  const Dataset b = random_batch(1, 6, rng);
  const Eigen::MatrixXd eps = standard_normal(1, 6, rng);
  double elbo = 0.0;
  for (Eigen::Index i = 0; i < b.size(); ++i) {
    const Eigen::VectorXd z = b.z.col(i);
    const auto q = scm::encoder_sample(m, z, b.x(i), b.y(i), eps(0, i));
    elbo += scm::decoder_log_joint(m, z, q.x_star, b.x(i), b.y(i)) - q.log_q;
  }
  CHECK(vi::iw_elbo(m, b, eps, 1.0) == doctest::Approx(elbo).epsilon(1e-12));
}

TEST_CASE("conjugate toy: bound equals log p(x, y | z) for any K and any noise") {
  Rng rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    const auto toy = testing::LinearToy::random(rng);
    const auto m = toy.model();
    const Dataset b = toy_batch(toy, 10, rng);
    const double exact = toy_log_marginal(toy, b);
    for (int k : {1, 8}) {
      for (int rep = 0; rep < 3; ++rep) {
        const double v = vi::iw_elbo(m, b, k, 1.0, rng);
        CHECK(std::abs(v - exact) < 1e-8);
      }
    }
  }
}

TEST_CASE("importance weighting tightens the bound on average") {
  Rng rng(5);
  scm::CemeModel m = random_model(1, rng);
  const Dataset b = random_batch(1, 4, rng);
  const int reps = 1000;
  std::vector<double> l1(reps), l8(reps);
  for (int r = 0; r < reps; ++r) {
    l1[r] = vi::iw_elbo(m, b, 1, 1.0, rng);
    l8[r] = vi::iw_elbo(m, b, 8, 1.0, rng);
  }
  auto mean_se = [](const std::vector<double>& v) {
    const double mu = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
    double ss = 0.0;
    for (double x : v) ss += (x - mu) * (x - mu);
    return std::pair{mu, std::sqrt(ss / (v.size() - 1) / v.size())};
  };
  const auto [m1, se1] = mean_se(l1);
  const auto [m8, se8] = mean_se(l8);
  CHECK(m8 >= m1 - 3 * std::hypot(se1, se8));
}

TEST_CASE("bound never exceeds the log-likelihood with an imperfect encoder") {
  Rng rng(71);
  for (int trial = 0; trial < 100; ++trial) {
    const auto toy = testing::LinearToy::random(rng);
    auto m = toy.model();
    m.encoder_mu_net.bias(0)(0) += 0.3;  // off the exact posterior
    const Dataset b = toy_batch(toy, 5, rng);
    const double exact = toy_log_marginal(toy, b);
    const int reps = 50;
    double sum = 0.0, sum2 = 0.0;
    for (int r = 0; r < reps; ++r) {
      const double v = vi::iw_elbo(m, b, 4, 1.0, rng);
      sum += v;
      sum2 += v * v;
    }
    const double mean = sum / reps;
    const double se = std::sqrt(std::max(0.0, sum2 / reps - mean * mean) / (reps - 1));
    CHECK(mean <= exact + 3 * se + 1e-12);
  }
}

TEST_CASE("iw_elbo rejects bad arguments and reports non-finite terms") {
  Rng rng(1);
  scm::CemeModel m = random_model(1, rng);
  Dataset b = random_batch(1, 3, rng);
  CHECK_THROWS_AS(vi::iw_elbo(m, b, 0, 1.0, rng), ConfigError);
  CHECK_THROWS_AS(vi::iw_elbo(m, b, 2, 0.5, rng), ConfigError);
  CHECK_THROWS_AS(vi::iw_elbo(m, b, Eigen::MatrixXd::Zero(2, 4), 1.0), ShapeError);
  b.y(1) = std::numeric_limits<double>::infinity();
  try {
    vi::iw_elbo(m, b, 2, 1.0, rng);
    FAIL("expected NumericalError");
  } catch (const NumericalError& e) {
    CHECK(e.index() == 1);
  }
}

TEST_CASE("anneal_weight schedule") {
  vi::TrainConfig cfg;  // 4 over 10 epochs
  CHECK(vi::anneal_weight(0, cfg) == 4.0);
  CHECK(vi::anneal_weight(5, cfg) == doctest::Approx(2.5).epsilon(1e-15));
  CHECK(vi::anneal_weight(10, cfg) == 1.0);
  CHECK(vi::anneal_weight(500, cfg) == 1.0);
  double prev = vi::anneal_weight(0, cfg);
  for (int e = 1; e < 30; ++e) {
    CHECK(vi::anneal_weight(e, cfg) <= prev);
    prev = vi::anneal_weight(e, cfg);
  }
}

TEST_CASE("mse_loss gradient matches finite differences") {
  Rng rng(12);
  scm::Regressor r(scm::Variant::naive, 2, scm::NetworkShape{}, rng);
  Dataset b = random_batch(2, 9, rng);
  nnet::MlpGradient g;
  vi::mse_loss(r, b, &g);
  const auto params = r.mu_y_net.parameters(true);
  const auto views = g.views();
  const auto res = testing::check_gradient(params, views, [&] { return vi::mse_loss(r, b); });
  CHECK(res.max_rel_error < 1e-4);
}

TEST_CASE("zero epoch budget returns the initial model and an empty history") {
  Rng rng(3);
  const auto cfg = quick_config(0);
  scm::CemeModel m(1, cfg.network, rng, 0.5, 0.5);
  const scm::CemeModel before = m;
  const auto rec = vi::train_ceme(m, small_synthetic(), small_synthetic_val(), cfg);
  CHECK(rec.train_loss.empty());
  CHECK(rec.validation_score.empty());
  CHECK(rec.stop_reason == vi::StopReason::zero_budget);
  CHECK(rec.best_epoch == -1);
  CHECK(m.tau_raw == before.tau_raw);
  CHECK((m.mu_y_net.weight(0).array() == before.mu_y_net.weight(0).array()).all());
}

TEST_CASE("training keeps the best checkpoint and is deterministic") {
  auto cfg = quick_config(25);
  cfg.lr_patience = 3;
  cfg.early_stop_patience = 1000;
  const auto a = vi::fit_variant(scm::Variant::ceme, small_synthetic(), small_synthetic_val(), cfg);
  const auto b = vi::fit_variant(scm::Variant::ceme, small_synthetic(), small_synthetic_val(), cfg);
  const auto& rec = a.record;
  REQUIRE(!rec.failed);
  CHECK(rec.best_validation_score <= rec.initial_validation_score);
  double best = rec.initial_validation_score;
  for (double v : rec.validation_score) best = std::min(best, v);
  CHECK(rec.best_validation_score == best);
  // restored checkpoint reproduces the recorded best score
  const double again = vi::ceme_validation_score(*a.model.latent(), small_synthetic_val(), cfg.n_importance_samples,
                                                 derive_seed(cfg.seed, "validation"));
  CHECK(again == rec.best_validation_score);
  // learning-rate sequence: non-increasing, each drop by exactly lr_factor
  for (std::size_t i = 1; i < rec.learning_rate.size(); ++i) {
    CHECK(rec.learning_rate[i] <= rec.learning_rate[i - 1]);
    if (rec.learning_rate[i] != rec.learning_rate[i - 1])
      CHECK(rec.learning_rate[i] == rec.learning_rate[i - 1] * cfg.lr_factor);
  }
  CHECK(a.record.train_loss == b.record.train_loss);
  CHECK(a.record.validation_score == b.record.validation_score);
  CHECK(vi::to_json(a.record) == vi::to_json(b.record));
}

TEST_CASE("CEME+ keeps tau bit-exact through training") {
  auto cfg = quick_config(5);
  const auto run = vi::fit_variant(scm::Variant::ceme_plus, small_synthetic(), small_synthetic_val(), cfg, 0.3141);
  REQUIRE(run.model.latent() != nullptr);
  CHECK(run.model.latent()->tau() == 0.3141);
  CHECK(!run.model.learned_tau().has_value());
  CHECK_THROWS_AS(vi::fit_variant(scm::Variant::ceme_plus, small_synthetic(), small_synthetic_val(), cfg),
                  ConfigError);
}

TEST_CASE("regressor fits noiseless linear data") {
  Rng rng(4);
  auto make = [&](Eigen::Index n) {
    Dataset d;
    d.z = standard_normal(1, n, rng);
    d.x_star = standard_normal(n, 1, rng);
    d.x = d.x_star;
    d.y = (2.0 * d.x_star.array() + 1.0).matrix();
    return d;
  };
  const Dataset train = make(2000), val = make(500);
  auto cfg = quick_config(300);
  cfg.network = scm::NetworkShape{};
  cfg.learning_rate = 0.001;
  const auto run = vi::fit_variant(scm::Variant::oracle, train, val, cfg);
  CHECK(run.record.best_validation_score < 1e-3);
  const Eigen::VectorXd probe = Eigen::VectorXd::LinSpaced(21, -2.0, 2.0);
  const Eigen::VectorXd pred = run.model.mu_y(Eigen::MatrixXd::Zero(1, 21), probe);
  CHECK(((pred.array() - (2.0 * probe.array() + 1.0)).abs() < 0.05).all());
  CHECK(run.model.sigma() == doctest::Approx(std::sqrt(vi::mse_loss(*run.model.regressor(), train))).epsilon(1e-15));
}

TEST_CASE("regressor on a constant target converges to the constant") {
  Rng rng(8);
  Dataset train = random_batch(1, 500, rng), val = random_batch(1, 100, rng);
  train.y.setConstant(0.75);
  val.y.setConstant(0.75);
  auto cfg = quick_config(100);
  const auto run = vi::fit_variant(scm::Variant::naive, train, val, cfg);
  CHECK(run.record.best_validation_score < 1e-3);
  CHECK(run.model.sigma() < 0.05);
}

TEST_CASE("choose_best picks the minimal non-failed score") {
  std::vector<vi::RunRecord> recs(3);
  recs[0].best_validation_score = 3.0;
  recs[1].best_validation_score = 1.0;
  recs[2].best_validation_score = 2.0;
  CHECK(vi::choose_best(recs) == 1);
  recs[1].failed = true;
  CHECK(vi::choose_best(recs) == 2);
  for (auto& r : recs) r.failed = true;
  CHECK_THROWS_AS(vi::choose_best(recs), Error);
}

TEST_CASE("best_of_restarts with one restart is the single run") {
  auto cfg = quick_config(3);
  const auto res = vi::best_of_restarts(scm::Variant::naive, small_synthetic(), small_synthetic_val(), cfg);
  REQUIRE(res.runs.size() == 1);
  CHECK(res.chosen == 0);
  cfg.restarts = 3;
  const auto three = vi::best_of_restarts(scm::Variant::naive, small_synthetic(), small_synthetic_val(), cfg);
  for (const auto& r : three.runs)
    CHECK(three.runs[three.chosen].record.best_validation_score <= r.record.best_validation_score);
  CHECK(three.runs[0].record.seed != three.runs[1].record.seed);
}

TEST_CASE("run records round-trip through JSON") {
  vi::RunRecord r;
  r.train_loss = {1.5, 1.25};
  r.validation_score = {1.4, std::numeric_limits<double>::infinity()};
  r.learning_rate = {0.01, 0.001};
  r.initial_validation_score = 2.0;
  r.best_validation_score = 1.4;
  r.best_epoch = 0;
  r.stop_reason = vi::StopReason::early_stopping;
  r.recoveries = 1;
  r.seed = 0xfedcba9876543210ULL;
  r.wall_seconds = 12.5;
  const auto back = vi::run_record_from_json(vi::to_json(r));
  CHECK(back.train_loss == r.train_loss);
  CHECK(back.validation_score == r.validation_score);
  CHECK(back.seed == r.seed);
  CHECK(back.stop_reason == r.stop_reason);
  CHECK(back.wall_seconds == 0.0);
  CHECK(vi::to_json(back) == vi::to_json(r));
}
