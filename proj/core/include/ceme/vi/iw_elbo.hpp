#pragma once

#include <Eigen/Core>

#include "ceme/data.hpp"
#include "ceme/random.hpp"
#include "ceme/scm/model.hpp"

namespace ceme::vi {

/// Importance-weighted lower bound on sum_i log p(x_i, y_i | z_i).
///
/// For each point i and each of the K columns of noise, x*_ij = mu_q + eps_ij * sigma_q and
///   w_ij = log p(x*_ij|z_i) + beta log p(x_i|x*_ij) + log p(y_i|z_i,x*_ij) - beta log q(x*_ij|z_i,x_i,y_i)
/// giving sum_i [logsumexp_j w_ij - log K]. beta = 1 is the plain bound; beta > 1
/// up-weights the measurement and encoder terms during annealing.
///
/// `eps` has shape (K, batch). When `grad` is non-null it receives the exact
/// gradient of the returned value (to be maximised). Throws NumericalError
/// naming the term and point index when a weight is not finite.
double iw_elbo(const scm::CemeModel& model, const Dataset& batch, const Eigen::MatrixXd& eps, double beta,
               scm::CemeGradient* grad = nullptr);

/// Same, drawing K standard-normal columns per point from `rng`.
double iw_elbo(const scm::CemeModel& model, const Dataset& batch, int k, double beta, Rng& rng,
               scm::CemeGradient* grad = nullptr);

/// Mean squared error of a regressor on `batch`; fills dMSE/dparams when `grad` is non-null.
double mse_loss(const scm::Regressor& reg, const Dataset& batch, nnet::MlpGradient* grad = nullptr);

}  // namespace ceme::vi
