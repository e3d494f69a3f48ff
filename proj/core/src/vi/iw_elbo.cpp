#include "ceme/vi/iw_elbo.hpp"

#include <cmath>
#include <string>

#include "ceme/error.hpp"
#include "ceme/nnet/activations.hpp"

namespace ceme::vi {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;

using Eigen::ArrayXXd;
using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

// Columns ordered point-major: column i*K + j holds (z_i, x*_ij).
MatrixXd decoder_inputs(const MatrixXd& z, const ArrayXXd& x_star) {
  const Index k = x_star.rows();
  const Index b = x_star.cols();
  MatrixXd in(z.rows() + 1, b * k);
  for (Index i = 0; i < b; ++i) {
    in.block(0, i * k, z.rows(), k) = z.col(i).replicate(1, k);
    in.block(z.rows(), i * k, 1, k) = x_star.col(i).transpose().matrix();
  }
  return in;
}

[[noreturn]] void report_non_finite(const ArrayXXd& lpxs, const ArrayXXd& lpx, const ArrayXXd& lpy,
                                    const ArrayXXd& lq) {
  const std::pair<const ArrayXXd*, const char*> terms[] = {
      {&lpxs, "log p(x*|z)"}, {&lpx, "log p(x|x*)"}, {&lpy, "log p(y|z,x*)"}, {&lq, "log q(x*|z,x,y)"}};
  for (const auto& [arr, name] : terms) {
    for (Index i = 0; i < arr->cols(); ++i)
      for (Index j = 0; j < arr->rows(); ++j)
        if (!std::isfinite((*arr)(j, i)))
          throw NumericalError(name, static_cast<long>(i),
                               std::string("iw_elbo: ") + name + " is not finite at point " + std::to_string(i) +
                                   ", importance sample " + std::to_string(j));
  }
  throw NumericalError("bound", -1, "iw_elbo: bound is not finite");
}

}  // namespace

double iw_elbo(const scm::CemeModel& model, const Dataset& batch, const MatrixXd& eps, double beta,
               scm::CemeGradient* grad) {
  batch.validate();
  const Index b = batch.size();
  const Index k = eps.rows();
  if (b == 0) throw ConfigError("iw_elbo: empty batch");
  if (k < 1 || eps.cols() != b) throw ShapeError("iw_elbo: eps must have shape (K, batch)");
  if (!(beta >= 1.0)) throw ConfigError("iw_elbo: term weight must be at least 1");
  if (batch.covariate_dim() != model.covariate_dim()) throw ShapeError("iw_elbo: covariate width mismatch");

  const MatrixXd enc_in = scm::stack_inputs(batch.z, {&batch.x, &batch.y});
  nnet::ForwardCache c_mq, c_sq, c_mx, c_sx, c_my;
  const bool want_grad = grad != nullptr;

  auto run = [&](const nnet::Mlp& net, const MatrixXd& in, nnet::ForwardCache& cache) -> ArrayXXd {
    return want_grad ? net.forward(in, cache).array() : net.forward(in).array();
  };

  const ArrayXXd mu_q = run(model.encoder_mu_net, enc_in, c_mq);        // 1 x B
  const ArrayXXd raw_q = run(model.encoder_sigma_net, enc_in, c_sq);    // 1 x B
  const ArrayXXd mu_x = run(model.mu_xstar_net, batch.z, c_mx);         // 1 x B
  const ArrayXXd raw_x = run(model.sigma_xstar_net, batch.z, c_sx);     // 1 x B
  const ArrayXXd s_q = nnet::softplus(raw_q);
  const ArrayXXd s_x = nnet::softplus(raw_x);
  const double tau = model.tau();
  const double sigma = model.sigma();

  const ArrayXXd e = eps.array();
  const ArrayXXd x_star = e.rowwise() * s_q.row(0) + mu_q.row(0).replicate(k, 1);  // K x B

  const MatrixXd dec_in = decoder_inputs(batch.z, x_star);
  const MatrixXd my_flat = want_grad ? model.mu_y_net.forward(dec_in, c_my) : model.mu_y_net.forward(dec_in);
  const ArrayXXd mu_y = Eigen::Map<const MatrixXd>(my_flat.data(), k, b).array();

  const ArrayXXd x_rep = batch.x.transpose().replicate(k, 1).array();
  const ArrayXXd y_rep = batch.y.transpose().replicate(k, 1).array();
  const ArrayXXd dx = x_star - mu_x.row(0).replicate(k, 1);  // x* - mu_X*
  const ArrayXXd sx_rep = s_x.row(0).replicate(k, 1);
  const ArrayXXd meas = x_rep - x_star;  // x - x*
  const ArrayXXd resid = y_rep - mu_y;   // y - mu_Y

  const ArrayXXd lpxs = -0.5 * (dx / sx_rep).square() - sx_rep.log() - kHalfLog2Pi;
  const ArrayXXd lpx = -0.5 * (meas / tau).square() - std::log(tau) - kHalfLog2Pi;
  const ArrayXXd lpy = -0.5 * (resid / sigma).square() - std::log(sigma) - kHalfLog2Pi;
  const ArrayXXd lq = -0.5 * e.square() - s_q.row(0).log().replicate(k, 1) - kHalfLog2Pi;

  const ArrayXXd w = lpxs + beta * lpx + lpy - beta * lq;
  if (!w.allFinite()) report_non_finite(lpxs, lpx, lpy, lq);

  const Eigen::Array<double, 1, Eigen::Dynamic> w_max = w.colwise().maxCoeff();
  const ArrayXXd shifted = (w.rowwise() - w_max).exp();
  const Eigen::Array<double, 1, Eigen::Dynamic> lse = w_max + shifted.colwise().sum().log();
  const double value = (lse - std::log(static_cast<double>(k))).sum();
  if (!std::isfinite(value)) throw NumericalError("bound", -1, "iw_elbo: bound is not finite");
  if (!want_grad) return value;

  // Self-normalised importance weights: d value / d w_ij.
  const ArrayXXd a = (w.rowwise() - lse).exp();

  // mu_Y network, including the path through its x* input.
  const ArrayXXd d_muy = a * resid / (sigma * sigma);
  MatrixXd d_dec_in;
  grad->mu_y = model.mu_y_net.backward(c_my, Eigen::Map<const MatrixXd>(d_muy.data(), 1, b * k), &d_dec_in);
  const Eigen::RowVectorXd d_xstar_flat = d_dec_in.row(d_dec_in.rows() - 1);
  const ArrayXXd d_xstar_via_y = Eigen::Map<const MatrixXd>(d_xstar_flat.data(), k, b).array();

  const ArrayXXd inv_sx2 = 1.0 / sx_rep.square();
  const ArrayXXd d_xstar = a * (-dx * inv_sx2 + beta * meas / (tau * tau)) + d_xstar_via_y;

  // prior network outputs
  const MatrixXd d_mu_x = (a * dx * inv_sx2).colwise().sum().matrix();
  const ArrayXXd d_s_x = (a * (-1.0 / sx_rep + dx.square() * inv_sx2 / sx_rep)).colwise().sum();
  const MatrixXd d_raw_x = (d_s_x * nnet::softplus_derivative(raw_x)).matrix();
  grad->mu_xstar = model.mu_xstar_net.backward(c_mx, d_mu_x);
  grad->sigma_xstar = model.sigma_xstar_net.backward(c_sx, d_raw_x);

  // encoder outputs: d x*/d mu_q = 1, d x*/d s_q = eps, and d(-beta log q)/d s_q = beta / s_q
  const MatrixXd d_mu_q = d_xstar.colwise().sum().matrix();
  const ArrayXXd d_s_q = (d_xstar * e).colwise().sum() + beta / s_q;
  const MatrixXd d_raw_q = (d_s_q * nnet::softplus_derivative(raw_q)).matrix();
  grad->encoder_mu = model.encoder_mu_net.backward(c_mq, d_mu_q);
  grad->encoder_sigma = model.encoder_sigma_net.backward(c_sq, d_raw_q);

  // noise scales
  const double d_tau = beta * (a * (-1.0 / tau + meas.square() / (tau * tau * tau))).sum();
  const double d_sigma = (a * (-1.0 / sigma + resid.square() / (sigma * sigma * sigma))).sum();
  grad->tau_raw = model.tau_fixed ? 0.0 : d_tau * nnet::softplus_derivative(model.tau_raw);
  grad->sigma_raw = d_sigma * nnet::softplus_derivative(model.sigma_raw);
  return value;
}

double iw_elbo(const scm::CemeModel& model, const Dataset& batch, int k, double beta, Rng& rng,
               scm::CemeGradient* grad) {
  if (k < 1) throw ConfigError("iw_elbo: need at least one importance sample");
  const MatrixXd eps = standard_normal(k, batch.size(), rng);
  return iw_elbo(model, batch, eps, beta, grad);
}

double mse_loss(const scm::Regressor& reg, const Dataset& batch, nnet::MlpGradient* grad) {
  batch.validate();
  const Index b = batch.size();
  if (b == 0) throw ConfigError("mse_loss: empty batch");
  const VectorXd& t = reg.treatment(batch);
  const MatrixXd in = scm::stack_inputs(batch.z, {&t});
  nnet::ForwardCache cache;
  const MatrixXd pred = grad ? reg.mu_y_net.forward(in, cache) : reg.mu_y_net.forward(in);
  const Eigen::RowVectorXd r = pred.row(0) - batch.y.transpose();
  const double loss = r.squaredNorm() / static_cast<double>(b);
  if (!std::isfinite(loss)) throw NumericalError("mse", -1, "mse_loss: loss is not finite");
  if (grad) *grad = reg.mu_y_net.backward(cache, (2.0 / static_cast<double>(b)) * r);
  return loss;
}

}  // namespace ceme::vi
