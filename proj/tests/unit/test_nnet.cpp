#include <cmath>
#include <limits>
#include <vector>

#include "doctest.h"

#include "ceme/error.hpp"
#include "ceme/nnet/activations.hpp"
#include "ceme/nnet/adam.hpp"
#include "ceme/nnet/mlp.hpp"
#include "gradcheck.hpp"

using namespace ceme;
using nnet::Mlp;

namespace {

// Straight-line evaluator, written without Eigen expressions.
std::vector<double> reference_forward(const Mlp& net, std::vector<double> a) {
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    const auto& w = net.weight(l);
    const auto& b = net.bias(l);
    std::vector<double> next(static_cast<std::size_t>(w.rows()));
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
      double s = b(i);
      for (Eigen::Index j = 0; j < w.cols(); ++j) s += w(i, j) * a[static_cast<std::size_t>(j)];
      const bool hidden = l + 1 < net.num_layers();
      next[static_cast<std::size_t>(i)] = hidden ? (s >= 0 ? s : std::exp(s) - 1.0) : s;
    }
    a = std::move(next);
  }
  return a;
}

// 0.5 * sum(out^2) + sum(c .* out) over a batch, with its gradient.
struct QuadLoss {
  Eigen::MatrixXd input;
  Eigen::MatrixXd c;

  double value(const Mlp& net) const {
    const Eigen::MatrixXd out = net.forward(input);
    return 0.5 * out.squaredNorm() + (c.array() * out.array()).sum();
  }
  nnet::MlpGradient gradient(const Mlp& net) const {
    nnet::ForwardCache cache;
    const Eigen::MatrixXd out = net.forward(input, cache);
    return net.backward(cache, out + c);
  }
};

void gradient_check_shape(int in, int width, int depth, int out, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<int> sizes{in};
  for (int i = 0; i < depth; ++i) sizes.push_back(width);
  sizes.push_back(out);
  Mlp net = Mlp::he_uniform(sizes, rng);
  for (std::size_t l = 0; l < net.num_layers(); ++l) net.bias(l) = 0.3 * standard_normal(net.bias(l).size(), 1, rng);
  QuadLoss loss{standard_normal(in, 6, rng), standard_normal(out, 6, rng)};
  const auto g = loss.gradient(net);
  const auto params = net.parameters(true);
  const auto views = g.views();
  const auto r = testing::check_gradient(params, views, [&] { return loss.value(net); });
  CAPTURE(width);
  CAPTURE(depth);
  CAPTURE(r.worst_tensor);
  CAPTURE(r.worst_index);
  CHECK(r.checked == net.num_parameters());
  CHECK(r.max_rel_error < 1e-4);
}

}  // namespace

TEST_CASE("elu branch values") {
  CHECK(nnet::elu(0.0) == 0.0);
  CHECK(nnet::elu(1.0) == 1.0);
  CHECK(nnet::elu(-1.0) == doctest::Approx(std::exp(-1.0) - 1.0).epsilon(1e-15));
  CHECK(nnet::elu(-1.0) == doctest::Approx(-0.632121).epsilon(1e-6));
  CHECK(nnet::elu_derivative(0.0) == 1.0);
  CHECK(nnet::elu_derivative(-1e-12) == doctest::Approx(1.0).epsilon(1e-11));
}

TEST_CASE("batched elu agrees with the scalar form") {
  Eigen::ArrayXXd x(1, 9);
  x << -40.0, -3.0, -1.0, -1e-3, -1e-12, 0.0, 1e-12, 0.5, 7.0;
  const Eigen::ArrayXXd a = nnet::elu(x);
  const Eigen::ArrayXXd d = nnet::elu_derivative_from_output(a);
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    CHECK(std::abs(a(i) - nnet::elu(x(i))) < 1e-15);
    CHECK(std::abs(d(i) - nnet::elu_derivative(x(i))) < 1e-15);
    if (x(i) >= 0.0) {
      CHECK(a(i) == x(i));
      CHECK(d(i) == 1.0);
    }
  }
}

TEST_CASE("softplus values and overflow safety") {
  CHECK(nnet::softplus(0.0) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(std::abs(nnet::softplus(50.0) - 50.0) < 1e-12);
  CHECK(nnet::softplus(-50.0) > 0.0);
  CHECK(nnet::softplus(-50.0) == doctest::Approx(std::exp(-50.0)).epsilon(1e-12));
  CHECK(std::isfinite(nnet::softplus(1000.0)));
  for (double y : {1e-6, 0.1, 1.0, 7.5, 40.0})
    CHECK(nnet::softplus(nnet::softplus_inverse(y)) == doctest::Approx(y).epsilon(1e-12));
}

TEST_CASE("activations are monotone on a grid") {
  double prev_e = -std::numeric_limits<double>::infinity();
  double prev_s = 0.0;
  for (int i = -4000; i <= 4000; ++i) {
    const double x = i * 0.01;
    CHECK(nnet::elu(x) >= prev_e);
    CHECK(nnet::softplus(x) >= prev_s);
    prev_e = nnet::elu(x);
    prev_s = nnet::softplus(x);
  }
}

TEST_CASE("forward: identity and constant maps") {
  Mlp id({3, 3});
  id.weight(0) = Eigen::MatrixXd::Identity(3, 3);
  const Eigen::VectorXd v = Eigen::Vector3d(0.5, -2.0, 7.0);
  CHECK(id.forward_one(v) == v);

  Mlp constant({4, 5, 2});
  constant.bias(1) = Eigen::Vector2d(1.5, -0.25);
  const Eigen::VectorXd out = constant.forward_one(Eigen::VectorXd::Constant(4, 3.0));
  CHECK(out(0) == 1.5);
  CHECK(out(1) == -0.25);
}

TEST_CASE("forward matches a straight-line evaluator") {
  Rng rng(11);
  Mlp net = Mlp::he_uniform({1, 16, 1}, rng);
  for (std::size_t l = 0; l < net.num_layers(); ++l) net.bias(l) = standard_normal(net.bias(l).size(), 1, rng);
  for (double x : {-2.0, -0.5, 0.0, 0.7, 3.0}) {
    const double ours = net.forward_one(Eigen::VectorXd::Constant(1, x))(0);
    const double ref = reference_forward(net, {x})[0];
    CHECK(ours == doctest::Approx(ref).epsilon(1e-13));
  }
}

TEST_CASE("forward is pure and validates input width") {
  Rng rng(3);
  Mlp net = Mlp::he_uniform({2, 20, 20, 1}, rng);
  const Eigen::MatrixXd in = standard_normal(2, 50, rng);
  const Eigen::MatrixXd a = net.forward(in);
  const Eigen::MatrixXd b = net.forward(in);
  CHECK((a.array() == b.array()).all());
  nnet::ForwardCache cache;
  CHECK((net.forward(in, cache).array() == a.array()).all());
  CHECK_THROWS_AS(net.forward(Eigen::MatrixXd(Eigen::MatrixXd::Zero(3, 4))), ShapeError);
  CHECK_THROWS_AS(Mlp({2}), ConfigError);
  CHECK_THROWS_AS(Mlp({2, 0, 1}), ConfigError);
}

TEST_CASE("gradient of 0.5|Wx+b|^2 on a linear net is the least-squares gradient") {
  Rng rng(5);
  Mlp net = Mlp::he_uniform({3, 2}, rng);
  net.bias(0) = Eigen::Vector2d(0.2, -0.4);
  const Eigen::MatrixXd x = standard_normal(3, 7, rng);
  nnet::ForwardCache cache;
  const Eigen::MatrixXd r = net.forward(x, cache);
  const auto g = net.backward(cache, r);
  // dL/dW = sum_i r_i x_i^T, dL/db = sum_i r_i with r = Wx + b.
  Eigen::MatrixXd r_direct = net.weight(0) * x;
  r_direct.colwise() += net.bias(0);
  CHECK((g.weights[0] - r_direct * x.transpose()).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((g.biases[0] - r_direct.rowwise().sum()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("gradient is exactly zero for a parameter the loss ignores") {
  Rng rng(6);
  Mlp net = Mlp::he_uniform({2, 4, 1}, rng);
  Eigen::MatrixXd x = standard_normal(2, 5, rng);
  x.row(1).setZero();  // second input never contributes
  nnet::ForwardCache cache;
  const Eigen::MatrixXd out = net.forward(x, cache);
  const auto g = net.backward(cache, out);
  CHECK((g.weights[0].col(1).array() == 0.0).all());
}

TEST_CASE("gradients match finite differences for every network shape in use") {
  gradient_check_shape(1, 20, 3, 1, 101);   // prior networks on scalar z
  gradient_check_shape(2, 20, 3, 1, 102);   // mu_Y on (z, x*)
  gradient_check_shape(3, 20, 3, 1, 103);   // encoder on (z, x, y)
  gradient_check_shape(25, 26, 3, 1, 104);  // education-wage widths
  gradient_check_shape(24, 30, 5, 1, 105);  // synthetic-outcome network
}

TEST_CASE("input gradient matches finite differences") {
  Rng rng(7);
  Mlp net = Mlp::he_uniform({3, 8, 8, 1}, rng);
  Eigen::MatrixXd x = standard_normal(3, 4, rng);
  nnet::ForwardCache cache;
  const Eigen::MatrixXd out = net.forward(x, cache);
  Eigen::MatrixXd d_in;
  net.backward(cache, Eigen::MatrixXd::Ones(1, 4), &d_in);
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      const double h = 1e-5;
      Eigen::MatrixXd up = x, down = x;
      up(i, j) += h;
      down(i, j) -= h;
      const double fd = (net.forward(up).sum() - net.forward(down).sum()) / (2 * h);
      CHECK(testing::rel_error(d_in(i, j), fd) < 1e-6);
    }
}

TEST_CASE("checkpoint round trip is exact") {
  Rng rng(8);
  Mlp net = Mlp::he_uniform({3, 7, 2}, rng);
  net.bias(0) = standard_normal(7, 1, rng);
  const Mlp back = nnet::mlp_from_checkpoint(nnet::to_checkpoint(net));
  REQUIRE(back.layer_sizes() == net.layer_sizes());
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    CHECK((back.weight(l).array() == net.weight(l).array()).all());
    CHECK((back.bias(l).array() == net.bias(l).array()).all());
  }
  CHECK_THROWS_AS(nnet::mlp_from_checkpoint("{\"format\":\"other\"}"), IoError);
  CHECK_THROWS_AS(nnet::mlp_from_checkpoint("not json"), IoError);
}

TEST_CASE("adam: zero gradient without decay leaves parameters unchanged") {
  std::vector<double> p{1.0, -2.0, 3.0};
  std::vector<double> g{0.0, 0.0, 0.0};
  std::vector<nnet::ParamView> params{{p, true}};
  std::vector<nnet::GradView> grads{g};
  auto st = nnet::AdamState::for_parameters(params, {});
  nnet::adam_step(params, grads, st);
  CHECK(p == std::vector<double>{1.0, -2.0, 3.0});
  CHECK(st.step_count == 1);
}

TEST_CASE("adam: first step moves each component by lr against the gradient sign") {
  std::vector<double> p{0.0, 0.0, 0.0};
  std::vector<double> g{0.3, -5.0, 1e-2};
  std::vector<nnet::ParamView> params{{p, false}};
  std::vector<nnet::GradView> grads{g};
  nnet::AdamOptions opt;
  opt.learning_rate = 0.01;
  auto st = nnet::AdamState::for_parameters(params, opt);
  nnet::adam_step(params, grads, st);
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double expected = -0.01 * (g[i] > 0 ? 1.0 : -1.0);
    CHECK(p[i] == doctest::Approx(expected).epsilon(1e-5));
  }
}

TEST_CASE("adam: two steps on a quadratic decrease the loss") {
  // f(p) = 2 p^2, curvature 4.
  std::vector<double> p{1.0};
  std::vector<nnet::ParamView> params{{p, false}};
  nnet::AdamOptions opt;
  opt.learning_rate = 0.05;
  auto st = nnet::AdamState::for_parameters(params, opt);
  double prev = 2 * p[0] * p[0];
  for (int k = 0; k < 2; ++k) {
    std::vector<double> g{4 * p[0]};
    std::vector<nnet::GradView> grads{g};
    nnet::adam_step(params, grads, st);
    const double now = 2 * p[0] * p[0];
    CHECK(now < prev);
    prev = now;
  }
}

TEST_CASE("adam: zero learning rate is the identity, decay is decoupled") {
  std::vector<double> p{1.0, 2.0};
  std::vector<double> q{1.0, 2.0};
  std::vector<double> g{0.5, -0.5};
  std::vector<nnet::ParamView> params{{p, true}, {q, false}};
  std::vector<nnet::GradView> grads{g, g};
  nnet::AdamOptions opt;
  opt.learning_rate = 0.0;
  opt.weight_decay = 0.1;
  auto st = nnet::AdamState::for_parameters(params, opt);
  nnet::adam_step(params, grads, st);
  CHECK(p == std::vector<double>{1.0, 2.0});

  // With a zero gradient only the decay term moves a fresh parameter.
  const std::vector<double> zero{0.0, 0.0};
  std::vector<double> r{1.0, 2.0};
  std::vector<nnet::ParamView> fresh{{r, true}};
  std::vector<nnet::GradView> fresh_g{zero};
  auto st2 = nnet::AdamState::for_parameters(fresh, opt);
  st2.options.learning_rate = 0.1;
  nnet::adam_step(fresh, fresh_g, st2);
  CHECK(r[0] == doctest::Approx(1.0 - 0.1 * 0.1 * 1.0).epsilon(1e-15));
  CHECK(r[1] == doctest::Approx(2.0 - 0.1 * 0.1 * 2.0).epsilon(1e-15));
}

TEST_CASE("adam: shape mismatch is rejected") {
  std::vector<double> p{1.0, 2.0};
  std::vector<double> g{1.0};
  std::vector<nnet::ParamView> params{{p, true}};
  std::vector<nnet::GradView> grads{g};
  auto st = nnet::AdamState::for_parameters(params, {});
  CHECK_THROWS_AS(nnet::adam_step(params, grads, st), ShapeError);
}
