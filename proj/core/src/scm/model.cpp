#include "ceme/scm/model.hpp"

#include <cmath>
#include <numbers>

#include "ceme/error.hpp"
#include "ceme/nnet/activations.hpp"
#include "json_io.hpp"

namespace ceme::scm {

namespace {
constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5 * log(2 pi)
}

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::ceme: return "ceme";
    case Variant::ceme_plus: return "ceme_plus";
    case Variant::oracle: return "oracle";
    case Variant::naive: return "naive";
  }
  return "unknown";
}

Variant parse_variant(std::string_view name) {
  if (name == "ceme") return Variant::ceme;
  if (name == "ceme_plus" || name == "ceme+") return Variant::ceme_plus;
  if (name == "oracle") return Variant::oracle;
  if (name == "naive") return Variant::naive;
  throw ConfigError("unknown model variant '" + std::string(name) + "'");
}

std::vector<int> NetworkShape::layer_sizes(int inputs, int outputs) const {
  if (hidden_width <= 0 || hidden_layers < 0) throw ConfigError("NetworkShape: invalid width or depth");
  std::vector<int> sizes{inputs};
  for (int i = 0; i < hidden_layers; ++i) sizes.push_back(hidden_width);
  sizes.push_back(outputs);
  return sizes;
}

double log_normal_pdf(double value, double mean, double sd) {
  const double u = (value - mean) / sd;
  return -0.5 * u * u - std::log(sd) - kHalfLog2Pi;
}

CemeModel::CemeModel(int covariate_dim, const NetworkShape& shape, Rng& rng, double tau0, double sigma0,
                     std::optional<double> fixed)
    : tau_fixed(fixed) {
  if (covariate_dim < 1) throw ConfigError("CemeModel: covariate dimension must be positive");
  if (!(tau0 > 0.0) || !(sigma0 > 0.0)) throw ConfigError("CemeModel: initial noise scales must be positive");
  if (fixed && !(*fixed > 0.0)) throw ConfigError("CemeModel: fixed tau must be positive");
  mu_xstar_net = nnet::Mlp::he_uniform(shape.layer_sizes(covariate_dim), rng);
  sigma_xstar_net = nnet::Mlp::he_uniform(shape.layer_sizes(covariate_dim), rng);
  mu_y_net = nnet::Mlp::he_uniform(shape.layer_sizes(covariate_dim + 1), rng);
  encoder_mu_net = nnet::Mlp::he_uniform(shape.layer_sizes(covariate_dim + 2), rng);
  encoder_sigma_net = nnet::Mlp::he_uniform(shape.layer_sizes(covariate_dim + 2), rng);
  tau_raw = nnet::softplus_inverse(tau0);
  sigma_raw = nnet::softplus_inverse(sigma0);
}

double CemeModel::tau() const { return tau_fixed ? *tau_fixed : nnet::softplus(tau_raw); }
double CemeModel::sigma() const { return nnet::softplus(sigma_raw); }

std::vector<nnet::ParamView> CemeModel::parameters() {
  std::vector<nnet::ParamView> out;
  for (auto* net : {&mu_xstar_net, &sigma_xstar_net, &mu_y_net, &encoder_mu_net, &encoder_sigma_net}) {
    auto p = net->parameters(true);
    out.insert(out.end(), p.begin(), p.end());
  }
  if (!tau_fixed) out.push_back({{&tau_raw, 1}, false});
  out.push_back({{&sigma_raw, 1}, false});
  return out;
}

std::vector<nnet::GradView> CemeModel::gradient_views(const CemeGradient& g) const {
  std::vector<nnet::GradView> out;
  for (const auto* net : {&g.mu_xstar, &g.sigma_xstar, &g.mu_y, &g.encoder_mu, &g.encoder_sigma}) {
    auto v = net->views();
    out.insert(out.end(), v.begin(), v.end());
  }
  if (!tau_fixed) out.emplace_back(&g.tau_raw, 1);
  out.emplace_back(&g.sigma_raw, 1);
  return out;
}

CemeGradient CemeModel::zero_gradient() const {
  return {mu_xstar_net.zero_gradient(), sigma_xstar_net.zero_gradient(), mu_y_net.zero_gradient(),
          encoder_mu_net.zero_gradient(), encoder_sigma_net.zero_gradient(), 0.0, 0.0};
}

bool CemeModel::all_finite() const {
  return mu_xstar_net.all_finite() && sigma_xstar_net.all_finite() && mu_y_net.all_finite() &&
         encoder_mu_net.all_finite() && encoder_sigma_net.all_finite() && std::isfinite(tau_raw) &&
         std::isfinite(sigma_raw);
}

void CemeModel::check_consistent() const {
  const int d = covariate_dim();
  auto expect = [](const nnet::Mlp& net, int in, const char* name) {
    if (net.input_size() != in || net.output_size() != 1)
      throw ShapeError(std::string("CemeModel: network ") + name + " has the wrong input or output width");
  };
  expect(sigma_xstar_net, d, "sigma_xstar");
  expect(mu_y_net, d + 1, "mu_y");
  expect(encoder_mu_net, d + 2, "encoder_mu");
  expect(encoder_sigma_net, d + 2, "encoder_sigma");
}

Eigen::MatrixXd stack_inputs(const Eigen::MatrixXd& z, std::initializer_list<const Eigen::VectorXd*> rows) {
  Eigen::MatrixXd out(z.rows() + static_cast<Eigen::Index>(rows.size()), z.cols());
  out.topRows(z.rows()) = z;
  Eigen::Index r = z.rows();
  for (const auto* v : rows) {
    if (v->size() != z.cols()) throw ShapeError("stack_inputs: row length mismatch");
    out.row(r++) = v->transpose();
  }
  return out;
}

DecoderTerms decoder_terms(const CemeModel& m, const Eigen::VectorXd& z, double x_star, double x, double y) {
  Eigen::VectorXd zx(z.size() + 1);
  zx << z, x_star;
  DecoderTerms t;
  const double mx = m.mu_xstar_net.forward_one(z)(0);
  const double sx = nnet::softplus(m.sigma_xstar_net.forward_one(z)(0));
  t.log_p_xstar = log_normal_pdf(x_star, mx, sx);
  t.log_p_x = log_normal_pdf(x, x_star, m.tau());
  t.log_p_y = log_normal_pdf(y, m.mu_y_net.forward_one(zx)(0), m.sigma());
  if (!std::isfinite(t.log_p_xstar)) throw NumericalError("log p(x*|z)", -1, "decoder: log p(x*|z) is not finite");
  if (!std::isfinite(t.log_p_x)) throw NumericalError("log p(x|x*)", -1, "decoder: log p(x|x*) is not finite");
  if (!std::isfinite(t.log_p_y)) throw NumericalError("log p(y|z,x*)", -1, "decoder: log p(y|z,x*) is not finite");
  return t;
}

double decoder_log_joint(const CemeModel& m, const Eigen::VectorXd& z, double x_star, double x, double y) {
  return decoder_terms(m, z, x_star, x, y).total();
}

EncoderSample encoder_sample(const CemeModel& m, const Eigen::VectorXd& z, double x, double y, double eps) {
  if (!std::isfinite(eps)) throw NumericalError("eps", -1, "encoder_sample: eps is not finite");
  Eigen::VectorXd in(z.size() + 2);
  in << z, x, y;
  EncoderSample s;
  s.mean = m.encoder_mu_net.forward_one(in)(0);
  s.sd = nnet::softplus(m.encoder_sigma_net.forward_one(in)(0));
  s.x_star = s.mean + eps * s.sd;
  s.log_q = -0.5 * eps * eps - std::log(s.sd) - kHalfLog2Pi;
  return s;
}

Dataset sample_scm(const CemeModel& m, const Eigen::MatrixXd& z, Rng& rng) {
  if (z.cols() == 0) throw ConfigError("sample_scm: empty covariate batch");
  const auto n = z.cols();
  const Eigen::VectorXd mx = m.mu_xstar_net.forward(z).row(0).transpose();
  const Eigen::VectorXd sx = nnet::softplus(m.sigma_xstar_net.forward(z).array()).row(0).transpose();
  Dataset d;
  d.z = z;
  d.x_star.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) d.x_star(i) = mx(i) + sx(i) * standard_normal(rng);
  const Eigen::VectorXd my = m.mu_y_net.forward(stack_inputs(z, {&d.x_star})).row(0).transpose();
  const double tau = m.tau();
  const double sigma = m.sigma();
  d.x.resize(n);
  d.y.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) d.x(i) = d.x_star(i) + tau * standard_normal(rng);
  for (Eigen::Index i = 0; i < n; ++i) d.y(i) = my(i) + sigma * standard_normal(rng);
  return d;
}

double predict_mu_y(const CemeModel& m, const Eigen::VectorXd& z, double x_star) {
  Eigen::VectorXd zx(z.size() + 1);
  zx << z, x_star;
  return m.mu_y_net.forward_one(zx)(0);
}

Regressor::Regressor(Variant v, int covariate_dim, const NetworkShape& shape, Rng& rng)
    : variant(v), mu_y_net(nnet::Mlp::he_uniform(shape.layer_sizes(covariate_dim + 1), rng)) {
  if (is_latent(v)) throw ConfigError("Regressor: variant must be oracle or naive");
}

Regressor::Regressor(Variant v, nnet::Mlp net, double sigma) : variant(v), mu_y_net(std::move(net)), sigma_hat(sigma) {
  if (is_latent(v)) throw ConfigError("Regressor: variant must be oracle or naive");
}

const Eigen::VectorXd& Regressor::treatment(const Dataset& data) const {
  if (variant == Variant::oracle) {
    if (!data.has_x_star()) throw ConfigError("Oracle regressor needs the true treatment column");
    return data.x_star;
  }
  return data.x;
}

Eigen::VectorXd Regressor::predict(const Eigen::MatrixXd& z, const Eigen::VectorXd& t) const {
  return mu_y_net.forward(stack_inputs(z, {&t})).row(0).transpose();
}

Variant FittedModel::variant() const {
  if (const auto* m = latent()) return m->variant();
  return std::get<Regressor>(model_).variant;
}

Eigen::VectorXd FittedModel::mu_y(const Eigen::MatrixXd& z, const Eigen::VectorXd& x_star) const {
  if (const auto* m = latent()) return m->mu_y_net.forward(stack_inputs(z, {&x_star})).row(0).transpose();
  return std::get<Regressor>(model_).predict(z, x_star);
}

double FittedModel::sigma() const {
  if (const auto* m = latent()) return m->sigma();
  return std::get<Regressor>(model_).sigma_hat;
}

std::optional<double> FittedModel::learned_tau() const {
  if (const auto* m = latent(); m && !m->tau_fixed) return m->tau();
  return std::nullopt;
}

std::string to_checkpoint(const FittedModel& model) {
  detail::json j;
  j["format"] = "ceme-model-v1";
  j["variant"] = std::string(to_string(model.variant()));
  if (const auto* m = model.latent()) {
    j["networks"] = {{"mu_xstar", detail::mlp_to_json(m->mu_xstar_net)},
                     {"sigma_xstar", detail::mlp_to_json(m->sigma_xstar_net)},
                     {"mu_y", detail::mlp_to_json(m->mu_y_net)},
                     {"encoder_mu", detail::mlp_to_json(m->encoder_mu_net)},
                     {"encoder_sigma", detail::mlp_to_json(m->encoder_sigma_net)}};
    j["tau_raw"] = m->tau_raw;
    j["sigma_raw"] = m->sigma_raw;
    j["tau_fixed"] = m->tau_fixed ? detail::json(*m->tau_fixed) : detail::json(nullptr);
  } else {
    const auto* r = model.regressor();
    j["networks"] = {{"mu_y", detail::mlp_to_json(r->mu_y_net)}};
    j["sigma_hat"] = r->sigma_hat;
  }
  return j.dump();
}

FittedModel fitted_model_from_checkpoint(std::string_view text) {
  const auto j = detail::parse_json(text, "model checkpoint");
  try {
    if (j.at("format").get<std::string>() != "ceme-model-v1") throw IoError("model checkpoint: unknown format");
    const Variant v = parse_variant(j.at("variant").get<std::string>());
    const auto& nets = j.at("networks");
    if (is_latent(v)) {
      CemeModel m;
      m.mu_xstar_net = detail::mlp_from_json(nets.at("mu_xstar"));
      m.sigma_xstar_net = detail::mlp_from_json(nets.at("sigma_xstar"));
      m.mu_y_net = detail::mlp_from_json(nets.at("mu_y"));
      m.encoder_mu_net = detail::mlp_from_json(nets.at("encoder_mu"));
      m.encoder_sigma_net = detail::mlp_from_json(nets.at("encoder_sigma"));
      m.tau_raw = j.at("tau_raw").get<double>();
      m.sigma_raw = j.at("sigma_raw").get<double>();
      if (!j.at("tau_fixed").is_null()) m.tau_fixed = j.at("tau_fixed").get<double>();
      if ((v == Variant::ceme_plus) != m.tau_fixed.has_value())
        throw IoError("model checkpoint: variant tag disagrees with tau_fixed");
      m.check_consistent();
      return FittedModel(std::move(m));
    }
    return FittedModel(Regressor(v, detail::mlp_from_json(nets.at("mu_y")), j.at("sigma_hat").get<double>()));
  } catch (const detail::json::exception& e) {
    throw IoError(std::string("model checkpoint: ") + e.what());
  }
}

Eigen::VectorXd mixture_density(const Eigen::VectorXd& component_means, double sigma, const Eigen::VectorXd& y) {
  if (component_means.size() == 0) throw ConfigError("mixture_density: no components");
  if (!(sigma > 0.0)) throw ConfigError("mixture_density: sigma must be positive");
  const double inv = 1.0 / (2.0 * sigma * sigma);
  const double norm = 1.0 / (sigma * std::sqrt(2.0 * std::numbers::pi) * static_cast<double>(component_means.size()));
  Eigen::VectorXd out(y.size());
  for (Eigen::Index k = 0; k < y.size(); ++k)
    out(k) = norm * (-(component_means.array() - y(k)).square() * inv).exp().sum();
  return out;
}

namespace {

void check_grid(const Eigen::VectorXd& y_grid, const Eigen::MatrixXd& z_sample) {
  if (z_sample.cols() == 0) throw ConfigError("interventional_density: empty z sample");
  for (Eigen::Index k = 1; k < y_grid.size(); ++k)
    if (!(y_grid(k) > y_grid(k - 1))) throw ConfigError("interventional_density: y grid must be strictly increasing");
}

}  // namespace

Eigen::VectorXd interventional_density(const FittedModel& model, double x_star, const Eigen::VectorXd& y_grid,
                                       const Eigen::MatrixXd& z_sample) {
  check_grid(y_grid, z_sample);
  const Eigen::VectorXd xs = Eigen::VectorXd::Constant(z_sample.cols(), x_star);
  return mixture_density(model.mu_y(z_sample, xs), model.sigma(), y_grid);
}

Eigen::VectorXd interventional_density(const CemeModel& model, double x_star, const Eigen::VectorXd& y_grid,
                                       const Eigen::MatrixXd& z_sample) {
  check_grid(y_grid, z_sample);
  const Eigen::VectorXd xs = Eigen::VectorXd::Constant(z_sample.cols(), x_star);
  const Eigen::VectorXd means = model.mu_y_net.forward(stack_inputs(z_sample, {&xs})).row(0).transpose();
  return mixture_density(means, model.sigma(), y_grid);
}

}  // namespace ceme::scm
