#include "ceme/gpdata/generator.hpp"

#include "ceme/error.hpp"
#include "ceme/nnet/activations.hpp"
#include "json_io.hpp"

namespace ceme::gpdata {

SyntheticTruth::SyntheticTruth(GpFunction mu_xstar, GpFunction sigma_xstar_raw, GpFunction mu_y, double tau,
                               double sigma, double noise_level, std::uint64_t seed)
    : mu_xstar_(std::move(mu_xstar)),
      sigma_raw_(std::move(sigma_xstar_raw)),
      mu_y_(std::move(mu_y)),
      tau_(tau),
      sigma_(sigma),
      noise_level_(noise_level),
      seed_(seed) {
  if (mu_xstar_.dimension() != 1 || sigma_raw_.dimension() != 1 || mu_y_.dimension() != 2)
    throw ShapeError("SyntheticTruth: expected 1-D, 1-D and 2-D functions");
}

double SyntheticTruth::mu_xstar(double z) const { return mu_xstar_.evaluate(std::span<const double>(&z, 1)); }

double SyntheticTruth::sigma_xstar(double z) const {
  return nnet::softplus(sigma_raw_.evaluate(std::span<const double>(&z, 1)));
}

double SyntheticTruth::mu_y(double z, double x_star) const {
  const double p[2] = {z, x_star};
  return mu_y_.evaluate(p);
}

Eigen::VectorXd SyntheticTruth::mu_y(const Eigen::MatrixXd& z, const Eigen::VectorXd& x_star) const {
  if (z.rows() != 1 || z.cols() != x_star.size()) throw ShapeError("SyntheticTruth::mu_y: expected scalar z");
  Eigen::MatrixXd pts(2, z.cols());
  pts.row(0) = z.row(0);
  pts.row(1) = x_star.transpose();
  return mu_y_.evaluate(pts);
}

SyntheticBundle generate_samples(const std::vector<Eigen::Index>& sizes, double noise_level, std::uint64_t seed,
                                 const GeneratorOptions& options) {
  if (sizes.empty()) throw ConfigError("generate_samples: no sample sizes");
  for (auto n : sizes)
    if (n < 2) throw ConfigError("generate_samples: every sample needs at least two rows");
  if (!(noise_level >= 0.0)) throw ConfigError("generate_samples: noise level must be non-negative");

  Rng truth_rng(derive_seed(seed, "truth"));
  std::vector<Rng> split_rng;
  for (std::size_t s = 0; s < sizes.size(); ++s) split_rng.emplace_back(derive_seed(seed, "split" + std::to_string(s)));

  Eigen::Index total = 0;
  for (auto n : sizes) total += n;

  // 1. covariates
  std::vector<Dataset> splits(sizes.size());
  Eigen::VectorXd z_all(total);
  for (std::size_t s = 0, off = 0; s < sizes.size(); off += static_cast<std::size_t>(sizes[s]), ++s) {
    splits[s].z = standard_normal(1, sizes[s], split_rng[s]);
    z_all.segment(static_cast<Eigen::Index>(off), sizes[s]) = splits[s].z.row(0).transpose();
  }

  // 2. mu_X* ~ GP(0, k), softplus^-1(sigma_X*) ~ GP(1, k) over a grid spanning z
  const Eigen::VectorXd z_grid = make_grid(z_all.minCoeff(), z_all.maxCoeff(), options.grid_points_1d, options.padding);
  GpFunction mu_xstar = GpFunction::sample(options.kernel, 0.0, z_grid.transpose(), truth_rng, options.base_jitter);
  GpFunction sigma_raw = GpFunction::sample(options.kernel, 1.0, z_grid.transpose(), truth_rng, options.base_jitter);

  // 3. x* ~ N(mu_X*(z), sigma_X*(z)^2)
  Eigen::VectorXd xs_all(total);
  for (std::size_t s = 0, off = 0; s < sizes.size(); off += static_cast<std::size_t>(sizes[s]), ++s) {
    const Eigen::VectorXd mu = mu_xstar.evaluate(splits[s].z);
    const Eigen::VectorXd sd = nnet::softplus(sigma_raw.evaluate(splits[s].z).array()).matrix();
    splits[s].x_star.resize(sizes[s]);
    for (Eigen::Index i = 0; i < sizes[s]; ++i) splits[s].x_star(i) = mu(i) + sd(i) * standard_normal(split_rng[s]);
    xs_all.segment(static_cast<Eigen::Index>(off), sizes[s]) = splits[s].x_star;
  }

  // 4. mu_Y ~ GP(0, k) over the padded (z, x*) box
  const Eigen::MatrixXd zx_grid = make_grid_2d(z_all, xs_all, options.grid_points_per_axis_2d, options.padding);
  GpFunction mu_y = GpFunction::sample(options.kernel, 0.0, zx_grid, truth_rng, options.base_jitter);

  // 5-6. noise scales from the first sample
  Eigen::MatrixXd pts0(2, sizes[0]);
  pts0.row(0) = splits[0].z.row(0);
  pts0.row(1) = splits[0].x_star.transpose();
  const double tau = noise_level * sample_sd(splits[0].x_star);
  const double sigma = noise_level * sample_sd(mu_y.evaluate(pts0));

  auto truth = std::make_shared<const SyntheticTruth>(std::move(mu_xstar), std::move(sigma_raw), std::move(mu_y), tau,
                                                      sigma, noise_level, seed);

  // 7-8. observed treatment and outcome
  for (std::size_t s = 0; s < sizes.size(); ++s) {
    auto& d = splits[s];
    const Eigen::VectorXd mean_y = truth->mu_y(d.z, d.x_star);
    d.x.resize(sizes[s]);
    d.y.resize(sizes[s]);
    for (Eigen::Index i = 0; i < sizes[s]; ++i) d.x(i) = d.x_star(i) + tau * standard_normal(split_rng[s]);
    for (Eigen::Index i = 0; i < sizes[s]; ++i) d.y(i) = mean_y(i) + sigma * standard_normal(split_rng[s]);
  }
  return {std::move(truth), std::move(splits)};
}

Dataset generate_dataset(Eigen::Index n, double noise_level, std::uint64_t seed, const GeneratorOptions& options,
                         std::shared_ptr<const SyntheticTruth>* truth) {
  auto bundle = generate_samples({n}, noise_level, seed, options);
  if (truth) *truth = bundle.truth;
  return std::move(bundle.splits.front());
}

SyntheticBundle dataset_bundle(Eigen::Index n_train, Eigen::Index n_val, Eigen::Index n_test, double noise_level,
                               std::uint64_t seed, const GeneratorOptions& options) {
  return generate_samples({n_train, n_val, n_test}, noise_level, seed, options);
}

namespace {

detail::json gp_to_json(const GpFunction& f) {
  detail::json j;
  j["dimension"] = f.dimension();
  j["alpha"] = f.kernel().alpha;
  j["lengthscale"] = f.kernel().lengthscale;
  j["prior_mean"] = f.prior_mean();
  j["jitter"] = f.jitter();
  const auto& g = f.grid();
  j["grid"] = std::vector<double>(g.data(), g.data() + g.size());  // column-major: point by point
  j["grid_values"] = std::vector<double>(f.grid_values().data(), f.grid_values().data() + f.grid_values().size());
  j["coefficients"] =
      std::vector<double>(f.coefficients().data(), f.coefficients().data() + f.coefficients().size());
  return j;
}

GpFunction gp_from_json(const detail::json& j) {
  const int dim = j.at("dimension").get<int>();
  auto grid = j.at("grid").get<std::vector<double>>();
  auto values = j.at("grid_values").get<std::vector<double>>();
  auto coef = j.at("coefficients").get<std::vector<double>>();
  if (dim < 1 || grid.size() != values.size() * static_cast<std::size_t>(dim))
    throw IoError("truth checkpoint: grid size mismatch");
  const auto k = static_cast<Eigen::Index>(values.size());
  return GpFunction(SqExpKernel{j.at("alpha").get<double>(), j.at("lengthscale").get<double>()},
                    j.at("prior_mean").get<double>(), Eigen::Map<Eigen::MatrixXd>(grid.data(), dim, k),
                    Eigen::Map<Eigen::VectorXd>(values.data(), k), Eigen::Map<Eigen::VectorXd>(coef.data(), k),
                    j.at("jitter").get<double>());
}

}  // namespace

std::string to_checkpoint(const SyntheticTruth& truth) {
  detail::json j;
  j["format"] = "ceme-gp-truth-v1";
  j["mu_xstar"] = gp_to_json(truth.mu_xstar_function());
  j["sigma_xstar_raw"] = gp_to_json(truth.sigma_xstar_raw_function());
  j["mu_y"] = gp_to_json(truth.mu_y_function());
  j["tau"] = truth.tau();
  j["sigma"] = truth.sigma();
  j["noise_level"] = truth.noise_level();
  j["seed"] = truth.seed();
  return j.dump();
}

SyntheticTruth synthetic_truth_from_checkpoint(std::string_view text) {
  const auto j = detail::parse_json(text, "truth checkpoint");
  try {
    if (j.at("format").get<std::string>() != "ceme-gp-truth-v1") throw IoError("truth checkpoint: unknown format");
    return SyntheticTruth(gp_from_json(j.at("mu_xstar")), gp_from_json(j.at("sigma_xstar_raw")),
                          gp_from_json(j.at("mu_y")), j.at("tau").get<double>(), j.at("sigma").get<double>(),
                          j.at("noise_level").get<double>(), j.at("seed").get<std::uint64_t>());
  } catch (const detail::json::exception& e) {
    throw IoError(std::string("truth checkpoint: ") + e.what());
  }
}

}  // namespace ceme::gpdata
