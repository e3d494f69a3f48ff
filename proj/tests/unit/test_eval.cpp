#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <numeric>
#include <vector>

#include "doctest.h"

#include "ceme/error.hpp"
#include "ceme/eval/metrics.hpp"
#include "ceme/nnet/activations.hpp"

using namespace ceme;

namespace {

double npdf(double y, double m, double s) {
  return std::exp(-(y - m) * (y - m) / (2 * s * s)) / (s * std::sqrt(2 * std::numbers::pi));
}
double ncdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// Truth given by a closed-form mu_Y(z, x*).
class FunctionTruth final : public CausalTruth {
 public:
  FunctionTruth(std::function<double(double, double)> f, double sigma, double tau, bool std_normal = true)
      : f_(std::move(f)), sigma_(sigma), tau_(tau), std_normal_(std_normal) {}
  Eigen::VectorXd mu_y(const Eigen::MatrixXd& z, const Eigen::VectorXd& xs) const override {
    Eigen::VectorXd out(xs.size());
    for (Eigen::Index i = 0; i < xs.size(); ++i) out(i) = f_(z.col(i).sum(), xs(i));
    return out;
  }
  double sigma() const override { return sigma_; }
  double tau() const override { return tau_; }
  bool standard_normal_covariate() const override { return std_normal_; }

 private:
  std::function<double(double, double)> f_;
  double sigma_, tau_;
  bool std_normal_;
};

// mu_Y = wz * z + wx * x* + b as a zero-hidden-layer regressor.
scm::FittedModel linear_model(scm::Variant v, double wz, double wx, double b, double sigma) {
  nnet::Mlp net({2, 1});
  net.weight(0)(0, 0) = wz;
  net.weight(0)(0, 1) = wx;
  net.bias(0)(0) = b;
  return scm::FittedModel(scm::Regressor(v, net, sigma));
}

Dataset test_set(Eigen::Index n, const CausalTruth& truth, std::uint64_t seed) {
  Rng rng(seed);
  Dataset d;
  d.z = standard_normal(1, n, rng);
  d.x_star = standard_normal(n, 1, rng);
  d.x = d.x_star + truth.tau() * Eigen::VectorXd(standard_normal(n, 1, rng));
  d.y = truth.mu_y(d.z, d.x_star) + truth.sigma() * Eigen::VectorXd(standard_normal(n, 1, rng));
  return d;
}

}  // namespace

TEST_CASE("rmse conventions") {
  Rng rng(1);
  const Eigen::VectorXd t = standard_normal(10, 1, rng);
  CHECK(eval::rmse(t, t) == 0.0);
  CHECK(eval::rmse((t.array() + 0.3).matrix(), t) == doctest::Approx(0.3).epsilon(1e-14));
  const Eigen::VectorXd e = standard_normal(10, 1, rng);
  double s = 0;
  for (int i = 0; i < 10; ++i) s += (e(i) - t(i)) * (e(i) - t(i));
  CHECK(std::abs(eval::rmse(e, t) - std::sqrt(s / 10)) < 1e-12);
  CHECK_THROWS_AS(eval::rmse(Eigen::VectorXd(), Eigen::VectorXd()), ConfigError);
}

TEST_CASE("rmse_mu_y is invariant to row order") {
  const FunctionTruth truth([](double z, double x) { return std::sin(z) + x * x; }, 0.3, 0.2);
  Dataset d = test_set(200, truth, 2);
  const auto m = linear_model(scm::Variant::oracle, 0.8, 0.1, 0.2, 0.3);
  const double a = eval::rmse_mu_y(m, truth, d);
  std::vector<Eigen::Index> perm(200);
  std::iota(perm.begin(), perm.end(), 0);
  std::reverse(perm.begin(), perm.end());
  std::rotate(perm.begin(), perm.begin() + 37, perm.end());
  const double b = eval::rmse_mu_y(m, truth, d.subset(perm));
  CHECK(a == doctest::Approx(b).epsilon(1e-14));
}

TEST_CASE("naive model is scored on the observed treatment by default") {
  const FunctionTruth truth([](double, double x) { return x; }, 0.5, 0.4);
  const Dataset d = test_set(500, truth, 3);
  const auto naive = linear_model(scm::Variant::naive, 0, 1, 0, 0.5);
  CHECK(eval::rmse_mu_y(naive, truth, d) == doctest::Approx(eval::rmse(d.x, d.x_star)).epsilon(1e-14));
  CHECK(eval::rmse_mu_y(naive, truth, d, eval::NaiveInput::true_treatment) == 0.0);
  const auto oracle = linear_model(scm::Variant::oracle, 0, 1, 0, 0.5);
  CHECK(eval::rmse_mu_y(oracle, truth, d) == 0.0);
}

TEST_CASE("relative error") {
  CHECK(eval::rel_error(1.0, 1.0) == 0.0);
  CHECK(eval::rel_error(1.2, 1.0) == doctest::Approx(0.2).epsilon(1e-15));
  CHECK(eval::rel_error(0.5, 2.0) == -0.75);
  CHECK_THROWS_AS(eval::rel_error(1.0, 0.0), ConfigError);
  CHECK_THROWS_AS(eval::rel_error(1.0, -1.0), ConfigError);
}

TEST_CASE("truth density by quadrature matches the Gaussian convolution") {
  const FunctionTruth truth([](double z, double) { return z; }, 1.0, 0.1);
  const Eigen::VectorXd y = Eigen::VectorXd::LinSpaced(50, -5, 5);
  const Eigen::VectorXd p = eval::truth_interventional_density(truth, 0.7, y);
  for (int k = 0; k < 50; ++k) CHECK(std::abs(p(k) - npdf(y(k), 0.0, std::sqrt(2.0))) < 1e-6);
}

TEST_CASE("truth density collapses when mu_Y ignores z and integrates to one") {
  const FunctionTruth truth([](double, double x) { return 2 * x - 1; }, 0.6, 0.1);
  const Eigen::VectorXd y = Eigen::VectorXd::LinSpaced(4001, -8, 8);
  const Eigen::VectorXd p = eval::truth_interventional_density(truth, 0.5, y);
  for (int k = 0; k < y.size(); k += 97) CHECK(std::abs(p(k) - npdf(y(k), 0.0, 0.6)) < 1e-8);
  const FunctionTruth wavy([](double z, double x) { return std::sin(2 * z) + x; }, 0.4, 0.1);
  const Eigen::VectorXd q = eval::truth_interventional_density(wavy, 0.3, y);
  double integral = 0;
  for (int k = 1; k < y.size(); ++k) integral += 0.5 * (q(k) + q(k - 1)) * (y(k) - y(k - 1));
  CHECK(std::abs(integral - 1.0) < 1e-4);
}

TEST_CASE("truth density quadrature agrees with Monte Carlo over z") {
  const FunctionTruth truth([](double z, double x) { return std::tanh(z) * x + 0.5 * z * z; }, 0.5, 0.1);
  Rng rng(4);
  const int m = 100000;
  const Eigen::VectorXd zs = standard_normal(m, 1, rng);
  std::uniform_real_distribution<double> xs_dist(-2, 2), y_dist(-2, 4);
  for (int probe = 0; probe < 20; ++probe) {
    const double xs = xs_dist(rng), y = y_dist(rng);
    const double quad = eval::truth_interventional_density(truth, xs, Eigen::VectorXd::Constant(1, y))(0);
    double s = 0, s2 = 0;
    for (int i = 0; i < m; ++i) {
      const double v = npdf(y, std::tanh(zs(i)) * xs + 0.5 * zs(i) * zs(i), 0.5);
      s += v;
      s2 += v * v;
    }
    const double mean = s / m;
    const double se = std::sqrt((s2 / m - mean * mean) / (m - 1));
    CHECK(std::abs(quad - mean) < 3 * se + 1e-12);
  }
}

TEST_CASE("multivariate truth requires a z sample and uses it") {
  const FunctionTruth truth([](double zsum, double x) { return zsum + x; }, 0.5, 0.1, false);
  const Eigen::VectorXd y = Eigen::VectorXd::LinSpaced(5, -1, 1);
  CHECK_THROWS_AS(eval::truth_interventional_density(truth, 0.0, y), ConfigError);
  Eigen::MatrixXd z(2, 2);
  z << 1, -1, 0.5, -0.5;
  const Eigen::VectorXd p = eval::truth_interventional_density(truth, 0.0, y, {}, &z);
  for (int k = 0; k < 5; ++k)
    CHECK(p(k) == doctest::Approx(0.5 * (npdf(y(k), 1.5, 0.5) + npdf(y(k), -1.5, 0.5))).epsilon(1e-13));
}

TEST_CASE("AID of shifted unit Gaussians") {
  const double expected = 2 * (2 * ncdf(0.25) - 1);
  // cross-check the closed form by dense quadrature of |N(0,1) - N(0.5,1)|
  double dense = 0.0;
  const int nodes = 200001;
  const double lo = -12, hi = 12.5, h = (hi - lo) / (nodes - 1);
  for (int k = 0; k < nodes; ++k) {
    const double y = lo + k * h;
    dense += (k == 0 || k == nodes - 1 ? 0.5 : 1.0) * h * std::abs(npdf(y, 0, 1) - npdf(y, 0.5, 1));
  }
  CHECK(std::abs(dense - expected) < 1e-8);
  CHECK(expected == doctest::Approx(0.3948).epsilon(1e-4));
  const eval::DensityFn truth = [](double, const Eigen::VectorXd& y) {
    return y.unaryExpr([](double v) { return npdf(v, 0, 1); }).eval();
  };
  const eval::DensityFn model = [](double, const Eigen::VectorXd& y) {
    return y.unaryExpr([](double v) { return npdf(v, 0.5, 1); }).eval();
  };
  Rng rng(5);
  const Eigen::VectorXd xs = standard_normal(500, 1, rng);
  const double a = eval::average_interventional_distance(model, truth, xs, -7, 7.5, 2000, 11);
  CHECK(std::abs(a - expected) < 0.01);
  CHECK(a >= 0.0);
  CHECK(a <= 2.0);
}

TEST_CASE("AID through fitted models: shifted model and model as truth") {
  const FunctionTruth flat([](double, double) { return 0.0; }, 1.0, 0.1);
  const Dataset d = test_set(2000, flat, 6);
  const auto shifted = linear_model(scm::Variant::oracle, 0, 0, 0.5, 1.0);
  const auto r = eval::aid(shifted, flat, d);
  CHECK(std::abs(r.value - 2 * (2 * ncdf(0.25) - 1)) < 0.01);
  CHECK(r.n_treatment == 500);
  CHECK(r.y_max - r.y_min == doctest::Approx(1.5 * (d.y.maxCoeff() - d.y.minCoeff())).epsilon(1e-12));

  // The model averages over the empirical z sample while the truth integrates
  // exactly, so the residual is Monte Carlo error in z.
  const FunctionTruth wavy([](double z, double x) { return 0.5 * z + 0.5 * x; }, 1.0, 0.1);
  const Dataset big = test_set(20000, wavy, 7);
  const auto same = linear_model(scm::Variant::oracle, 0.5, 0.5, 0.0, 1.0);
  eval::AidOptions opt;
  opt.n_treatment = 100;
  const auto s = eval::aid(same, wavy, big, opt);
  CHECK(s.value < 0.01);
}

TEST_CASE("AID arguments are validated") {
  const eval::DensityFn f = [](double, const Eigen::VectorXd& y) { return y; };
  CHECK_THROWS_AS(eval::average_interventional_distance(f, f, Eigen::VectorXd(), 0, 1, 10, 1), ConfigError);
  CHECK_THROWS_AS(eval::average_interventional_distance(f, f, Eigen::VectorXd::Zero(2), 1, 1, 10, 1), ConfigError);
}

TEST_CASE("evaluate assembles variant-specific reports") {
  const FunctionTruth truth([](double z, double x) { return z + x; }, 0.5, 0.3);
  const Dataset d = test_set(800, truth, 8);
  eval::EvalOptions opt;
  opt.aid.n_treatment = 50;
  opt.aid.n_y = 500;

  const auto oracle = linear_model(scm::Variant::oracle, 1, 1, 0, 0.5);
  const auto rep = eval::evaluate(oracle, truth, d, opt);
  CHECK(rep.rmse_mu_y < 1e-12);
  CHECK(*rep.rel_err_sigma == 0.0);
  CHECK(!rep.rel_err_tau);
  REQUIRE(rep.aid);
  CHECK(*rep.aid < 0.05);
  CHECK(rep.truth_integration == "trapezoid");
  CHECK(rep.z_nodes == 401);

  Rng rng(9);
  scm::CemeModel cm(1, scm::NetworkShape{}, rng, 0.36, 0.5);
  const auto ceme_rep = eval::evaluate(scm::FittedModel(cm), truth, d, opt);
  REQUIRE(ceme_rep.rel_err_tau);
  CHECK(*ceme_rep.rel_err_tau == doctest::Approx(0.2).epsilon(1e-12));
  cm.tau_fixed = 0.3;
  CHECK(!eval::evaluate(scm::FittedModel(cm), truth, d, opt).rel_err_tau);
  const auto naive_rep = eval::evaluate(linear_model(scm::Variant::naive, 1, 1, 0, 0.5), truth, d, opt);
  CHECK(!naive_rep.rel_err_tau);
  CHECK(naive_rep.rmse_mu_y > 0.2);
}

TEST_CASE("noiseless truth: rmse still computed, sigma-based metrics absent") {
  const FunctionTruth truth([](double z, double x) { return z - x; }, 0.0, 0.0);
  const Dataset d = test_set(300, truth, 10);
  const auto oracle = linear_model(scm::Variant::oracle, 1, -1, 0, 0.0);
  const auto rep = eval::evaluate(oracle, truth, d);
  CHECK(rep.rmse_mu_y < 1e-12);
  CHECK(!rep.rel_err_sigma);
  CHECK(!rep.aid);
}

TEST_CASE("reports replay from dumped predictions and round-trip through JSON") {
  const FunctionTruth truth([](double z, double x) { return std::cos(z) * x; }, 0.4, 0.2);
  const Dataset d = test_set(400, truth, 12);
  eval::EvalOptions opt;
  opt.aid.n_treatment = 20;
  opt.aid.n_y = 300;
  opt.aid.seed = 99;
  const auto m = linear_model(scm::Variant::naive, 0.3, 0.9, 0.1, 0.45);
  eval::Predictions pred;
  const auto rep = eval::evaluate(m, truth, d, opt, &pred);
  const auto back = eval::predictions_from_csv(eval::predictions_csv(pred));
  CHECK(eval::rmse(back.model_mu_y, back.truth_mu_y) == rep.rmse_mu_y);
  const auto again = eval::evaluate(m, truth, d, opt);
  CHECK(eval::to_json(again) == eval::to_json(rep));
  const auto parsed = eval::metric_report_from_json(eval::to_json(rep));
  CHECK(eval::to_json(parsed) == eval::to_json(rep));
  CHECK(parsed.aid == rep.aid);
  CHECK(!parsed.rel_err_tau);
}
