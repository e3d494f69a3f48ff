#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "ceme/data.hpp"
#include "ceme/nnet/mlp.hpp"
#include "ceme/random.hpp"

namespace ceme::scm {

enum class Variant { ceme, ceme_plus, oracle, naive };

std::string_view to_string(Variant v);
/// Accepts "ceme", "ceme_plus", "oracle", "naive".
Variant parse_variant(std::string_view name);
/// CEME and CEME+ carry a latent true treatment; Oracle and Naive are plain regressions.
constexpr bool is_latent(Variant v) { return v == Variant::ceme || v == Variant::ceme_plus; }

struct NetworkShape {
  int hidden_width = 20;
  int hidden_layers = 3;

  std::vector<int> layer_sizes(int inputs, int outputs = 1) const;
};

/// log N(value | mean, sd^2).
double log_normal_pdf(double value, double mean, double sd);

/// Gradients of a scalar objective with respect to every CemeModel parameter.
struct CemeGradient {
  nnet::MlpGradient mu_xstar;
  nnet::MlpGradient sigma_xstar;
  nnet::MlpGradient mu_y;
  nnet::MlpGradient encoder_mu;
  nnet::MlpGradient encoder_sigma;
  double tau_raw = 0.0;
  double sigma_raw = 0.0;
};

/// Latent-variable SCM Z -> X* -> X, (Z, X*) -> Y with Gaussian conditionals
///   X* | z  ~ N(mu_X*(z), sigma_X*(z)^2)
///   X | x*  ~ N(x*, tau^2)
///   Y | z,x* ~ N(mu_Y(z, x*), sigma^2)
/// plus the amortised encoder q(x* | z, x, y) = N(mu_q, sigma_q^2).
/// Standard deviations are softplus of the raw network output / raw scalar.
class CemeModel {
 public:
  CemeModel() = default;

  /// He-initialised networks; tau and sigma start at `tau0`, `sigma0`.
  /// With `tau_fixed` set the model is CEME+ and tau is never trained.
  CemeModel(int covariate_dim, const NetworkShape& shape, Rng& rng, double tau0, double sigma0,
            std::optional<double> tau_fixed = std::nullopt);

  nnet::Mlp mu_xstar_net;       // z -> mean of x*
  nnet::Mlp sigma_xstar_net;    // z -> raw sd of x*
  nnet::Mlp mu_y_net;           // (z, x*) -> mean of y
  nnet::Mlp encoder_mu_net;     // (z, x, y) -> posterior mean
  nnet::Mlp encoder_sigma_net;  // (z, x, y) -> raw posterior sd
  double tau_raw = 0.0;
  double sigma_raw = 0.0;
  std::optional<double> tau_fixed;

  double tau() const;
  double sigma() const;
  int covariate_dim() const { return mu_xstar_net.input_size(); }
  Variant variant() const { return tau_fixed ? Variant::ceme_plus : Variant::ceme; }

  /// Trainable tensors. Network tensors take weight decay, the raw noise
  /// scalars do not; tau_raw is absent when tau is fixed.
  std::vector<nnet::ParamView> parameters();
  /// Gradient tensors in the order of `parameters()`.
  std::vector<nnet::GradView> gradient_views(const CemeGradient& g) const;
  CemeGradient zero_gradient() const;
  bool all_finite() const;

  /// Throws ShapeError when network widths do not fit the covariate dimension.
  void check_consistent() const;
};

struct DecoderTerms {
  double log_p_xstar = 0.0;
  double log_p_x = 0.0;
  double log_p_y = 0.0;

  double total() const { return log_p_xstar + log_p_x + log_p_y; }
};

/// log p(x*|z) + log p(x|x*) + log p(y|z,x*). Throws NumericalError naming
/// the first non-finite term.
DecoderTerms decoder_terms(const CemeModel& m, const Eigen::VectorXd& z, double x_star, double x, double y);
double decoder_log_joint(const CemeModel& m, const Eigen::VectorXd& z, double x_star, double x, double y);

struct EncoderSample {
  double x_star = 0.0;
  double log_q = 0.0;
  double mean = 0.0;
  double sd = 0.0;
};

/// Reparameterised draw x* = mu_q + eps * sigma_q and its log density.
EncoderSample encoder_sample(const CemeModel& m, const Eigen::VectorXd& z, double x, double y, double eps);

/// Ancestral sampling of (x*, x, y) for every column of `z`.
Dataset sample_scm(const CemeModel& m, const Eigen::MatrixXd& z, Rng& rng);

double predict_mu_y(const CemeModel& m, const Eigen::VectorXd& z, double x_star);

/// Network input matrix stacking `z` over one or more extra rows.
Eigen::MatrixXd stack_inputs(const Eigen::MatrixXd& z, std::initializer_list<const Eigen::VectorXd*> rows);

/// Plain regression of y on (z, t): t = x* for Oracle, t = x for Naive.
class Regressor {
 public:
  Regressor() = default;
  Regressor(Variant variant, int covariate_dim, const NetworkShape& shape, Rng& rng);
  Regressor(Variant variant, nnet::Mlp net, double sigma_hat);

  Variant variant = Variant::oracle;
  nnet::Mlp mu_y_net;
  double sigma_hat = 0.0;

  /// The treatment column this regressor trains on.
  const Eigen::VectorXd& treatment(const Dataset& data) const;
  Eigen::VectorXd predict(const Eigen::MatrixXd& z, const Eigen::VectorXd& t) const;
  int covariate_dim() const { return mu_y_net.input_size() - 1; }
};

/// Any of the four trained variants behind one evaluation surface.
class FittedModel {
 public:
  FittedModel() = default;
  explicit FittedModel(CemeModel m) : model_(std::move(m)) {}
  explicit FittedModel(Regressor r) : model_(std::move(r)) {}

  Variant variant() const;
  /// mu_Y evaluated at (z, x*); for Naive the x* values enter the slot it was trained on.
  Eigen::VectorXd mu_y(const Eigen::MatrixXd& z, const Eigen::VectorXd& x_star) const;
  double sigma() const;
  /// Learned measurement-error sd; only CEME learns one.
  std::optional<double> learned_tau() const;

  const CemeModel* latent() const { return std::get_if<CemeModel>(&model_); }
  const Regressor* regressor() const { return std::get_if<Regressor>(&model_); }

 private:
  std::variant<CemeModel, Regressor> model_;
};

/// JSON checkpoint ("ceme-model-v1"): variant tag, every network in the Mlp
/// checkpoint format, raw noise scalars, fixed tau and regressor sigma.
std::string to_checkpoint(const FittedModel& model);
FittedModel fitted_model_from_checkpoint(std::string_view text);

/// (1/M) sum_m N(y | mean_m, sigma^2) at each y.
Eigen::VectorXd mixture_density(const Eigen::VectorXd& component_means, double sigma, const Eigen::VectorXd& y);

/// p(y | do(x*)) by the adjustment formula, averaging over the columns of `z_sample`.
Eigen::VectorXd interventional_density(const FittedModel& model, double x_star, const Eigen::VectorXd& y_grid,
                                       const Eigen::MatrixXd& z_sample);
Eigen::VectorXd interventional_density(const CemeModel& model, double x_star, const Eigen::VectorXd& y_grid,
                                       const Eigen::MatrixXd& z_sample);

}  // namespace ceme::scm
