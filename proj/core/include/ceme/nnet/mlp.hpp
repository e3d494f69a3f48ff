#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "ceme/random.hpp"

namespace ceme::nnet {

/// A mutable view of one parameter tensor. `decay` marks whether decoupled
/// weight decay applies to it.
struct ParamView {
  std::span<double> values;
  bool decay = true;
};

/// Read-only gradient tensor, ordered like the matching ParamView list.
using GradView = std::span<const double>;

/// Intermediate values of a batched forward pass, needed by `backward`.
struct ForwardCache {
  std::vector<Eigen::MatrixXd> activations;      // activations[0] is the input
  std::vector<Eigen::MatrixXd> pre_activations;  // one per layer
};

/// Per-layer gradients of a scalar loss; same shapes as the network.
struct MlpGradient {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;

  void set_zero();
  MlpGradient& operator+=(const MlpGradient& other);
  MlpGradient& operator*=(double factor);
  std::vector<GradView> views() const;
};

/// Dense feed-forward network: ELU between layers, affine output.
///
/// Batched entry points take one sample per column, so an input of shape
/// (in, B) produces an output of shape (out, B).
class Mlp {
 public:
  Mlp() = default;

  /// Zero-initialised network with the given layer sizes (input, hidden..., output).
  explicit Mlp(std::vector<int> layer_sizes);

  /// Uniform He fan-in initialisation for weights, zero biases.
  static Mlp he_uniform(std::vector<int> layer_sizes, Rng& rng);

  const std::vector<int>& layer_sizes() const noexcept { return sizes_; }
  int input_size() const { return sizes_.front(); }
  int output_size() const { return sizes_.back(); }
  std::size_t num_layers() const noexcept { return weights_.size(); }
  std::size_t num_parameters() const;

  Eigen::MatrixXd& weight(std::size_t layer) { return weights_.at(layer); }
  const Eigen::MatrixXd& weight(std::size_t layer) const { return weights_.at(layer); }
  Eigen::VectorXd& bias(std::size_t layer) { return biases_.at(layer); }
  const Eigen::VectorXd& bias(std::size_t layer) const { return biases_.at(layer); }

  Eigen::VectorXd forward_one(const Eigen::VectorXd& input) const;
  Eigen::MatrixXd forward(const Eigen::MatrixXd& input) const;
  Eigen::MatrixXd forward(const Eigen::MatrixXd& input, ForwardCache& cache) const;

  /// Reverse-mode pass. `d_output` is dLoss/dOutput with the output's shape.
  /// When `d_input` is non-null it receives dLoss/dInput.
  MlpGradient backward(const ForwardCache& cache, const Eigen::MatrixXd& d_output,
                       Eigen::MatrixXd* d_input = nullptr) const;

  MlpGradient zero_gradient() const;

  /// Parameter tensors in a fixed order: W0, b0, W1, b1, ...
  std::vector<ParamView> parameters(bool decay = true);

  bool all_finite() const;

 private:
  void check_input(Eigen::Index rows) const;

  std::vector<int> sizes_;
  std::vector<Eigen::MatrixXd> weights_;
  std::vector<Eigen::VectorXd> biases_;
};

/// JSON checkpoint (format "ceme-mlp-v1"): layer sizes, row-major weights, biases.
std::string to_checkpoint(const Mlp& net);
Mlp mlp_from_checkpoint(std::string_view text);

}  // namespace ceme::nnet
