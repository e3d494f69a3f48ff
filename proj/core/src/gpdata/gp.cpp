#include "ceme/gpdata/gp.hpp"

#include <cmath>

#include <Eigen/Cholesky>

#include "ceme/error.hpp"

namespace ceme::gpdata {

double SqExpKernel::operator()(std::span<const double> u1, std::span<const double> u2) const {
  if (u1.size() != u2.size()) throw ShapeError("SqExpKernel: points differ in dimension");
  double d2 = 0.0;
  for (std::size_t i = 0; i < u1.size(); ++i) d2 += (u1[i] - u2[i]) * (u1[i] - u2[i]);
  return alpha * std::exp(-d2 / (2.0 * lengthscale * lengthscale));
}

Eigen::MatrixXd SqExpKernel::cross(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) const {
  if (a.rows() != b.rows()) throw ShapeError("SqExpKernel::cross: points differ in dimension");
  Eigen::ArrayXXd d2 = Eigen::ArrayXXd::Zero(a.cols(), b.cols());
  for (Eigen::Index k = 0; k < a.rows(); ++k) {
    d2 += (a.row(k).transpose().replicate(1, b.cols()) - b.row(k).replicate(a.cols(), 1)).array().square();
  }
  return (alpha * (-d2 / (2.0 * lengthscale * lengthscale)).exp()).matrix();
}

GpFunction::GpFunction(SqExpKernel kernel, double prior_mean, Eigen::MatrixXd grid, Eigen::VectorXd grid_values,
                       Eigen::VectorXd coefficients, double jitter)
    : kernel_(kernel),
      prior_mean_(prior_mean),
      grid_(std::move(grid)),
      values_(std::move(grid_values)),
      coefficients_(std::move(coefficients)),
      jitter_(jitter) {
  if (values_.size() != grid_.cols() || coefficients_.size() != grid_.cols())
    throw ShapeError("GpFunction: grid, values and coefficients are not aligned");
}

GpFunction GpFunction::sample(const SqExpKernel& kernel, double prior_mean, Eigen::MatrixXd grid, Rng& rng,
                              double base_jitter) {
  if (grid.cols() < 1) throw GenerationError("GpFunction::sample: empty grid");
  if (!(kernel.alpha >= 0.0) || !(kernel.lengthscale > 0.0))
    throw ConfigError("GpFunction::sample: invalid kernel parameters");

  const Eigen::MatrixXd gram = kernel.cross(grid, grid);
  const auto k = grid.cols();
  // The draw consumes the stream once, independent of how many jitter levels are tried.
  const Eigen::VectorXd xi = standard_normal(k, 1, rng);

  double jitter = base_jitter * (kernel.alpha > 0.0 ? kernel.alpha : 1.0);
  for (int attempt = 0; attempt < 3; ++attempt, jitter *= 100.0) {
    Eigen::MatrixXd a = gram;
    a.diagonal().array() += jitter;
    Eigen::LLT<Eigen::MatrixXd> llt(a);
    if (llt.info() != Eigen::Success) continue;
    const Eigen::MatrixXd& l = llt.matrixL();
    if (!l.allFinite()) continue;

    const Eigen::VectorXd centred = l.triangularView<Eigen::Lower>() * xi;
    Eigen::VectorXd w = llt.solve(centred);
    if (!w.allFinite()) continue;

    GpFunction f;
    f.kernel_ = kernel;
    f.prior_mean_ = prior_mean;
    f.grid_ = std::move(grid);
    f.coefficients_ = std::move(w);
    f.values_ = (gram * f.coefficients_).array() + prior_mean;
    f.jitter_ = jitter;
    f.projection_residual_ = ((centred.array() + prior_mean) - f.values_.array()).abs().maxCoeff();
    return f;
  }
  throw GenerationError("GpFunction::sample: Cholesky failed up to jitter " + std::to_string(jitter / 100.0));
}

double GpFunction::evaluate(std::span<const double> point) const {
  if (static_cast<Eigen::Index>(point.size()) != grid_.rows())
    throw ShapeError("GpFunction::evaluate: point dimension mismatch");
  Eigen::MatrixXd p(grid_.rows(), 1);
  for (Eigen::Index i = 0; i < grid_.rows(); ++i) p(i, 0) = point[static_cast<std::size_t>(i)];
  return evaluate(p)(0);
}

Eigen::VectorXd GpFunction::evaluate(const Eigen::MatrixXd& points) const {
  if (points.rows() != grid_.rows()) throw ShapeError("GpFunction::evaluate: point dimension mismatch");
  constexpr Eigen::Index chunk = 512;
  Eigen::VectorXd out(points.cols());
  for (Eigen::Index start = 0; start < points.cols(); start += chunk) {
    const auto len = std::min(chunk, points.cols() - start);
    const Eigen::MatrixXd kx = kernel_.cross(points.middleCols(start, len), grid_);
    out.segment(start, len) = (kx * coefficients_).array() + prior_mean_;
  }
  return out;
}

Eigen::VectorXd make_grid(double data_min, double data_max, int count, GridPadding pad) {
  if (count < 2) throw ConfigError("make_grid: need at least two points");
  if (!(data_max > data_min)) throw ConfigError("make_grid: degenerate data range");
  const double range = data_max - data_min;
  return Eigen::VectorXd::LinSpaced(count, data_min - pad.low * range, data_max + pad.high * range);
}

Eigen::MatrixXd make_grid_2d(const Eigen::VectorXd& first, const Eigen::VectorXd& second, int per_axis,
                             GridPadding pad) {
  if (first.size() == 0 || second.size() == 0) throw ConfigError("make_grid_2d: empty data");
  const Eigen::VectorXd a = make_grid(first.minCoeff(), first.maxCoeff(), per_axis, pad);
  const Eigen::VectorXd b = make_grid(second.minCoeff(), second.maxCoeff(), per_axis, pad);
  Eigen::MatrixXd grid(2, static_cast<Eigen::Index>(per_axis) * per_axis);
  Eigen::Index c = 0;
  for (Eigen::Index i = 0; i < a.size(); ++i)
    for (Eigen::Index j = 0; j < b.size(); ++j, ++c) {
      grid(0, c) = a(i);
      grid(1, c) = b(j);
    }
  return grid;
}

}  // namespace ceme::gpdata
