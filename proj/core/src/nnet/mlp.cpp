#include "ceme/nnet/mlp.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "ceme/error.hpp"
#include "ceme/nnet/activations.hpp"
#include "json_io.hpp"

namespace ceme::nnet {

void MlpGradient::set_zero() {
  for (auto& w : weights) w.setZero();
  for (auto& b : biases) b.setZero();
}

MlpGradient& MlpGradient::operator+=(const MlpGradient& other) {
  if (other.weights.size() != weights.size()) throw ShapeError("MlpGradient: layer count mismatch");
  for (std::size_t l = 0; l < weights.size(); ++l) {
    weights[l] += other.weights[l];
    biases[l] += other.biases[l];
  }
  return *this;
}

MlpGradient& MlpGradient::operator*=(double factor) {
  for (auto& w : weights) w *= factor;
  for (auto& b : biases) b *= factor;
  return *this;
}

std::vector<GradView> MlpGradient::views() const {
  std::vector<GradView> out;
  out.reserve(2 * weights.size());
  for (std::size_t l = 0; l < weights.size(); ++l) {
    out.emplace_back(weights[l].data(), static_cast<std::size_t>(weights[l].size()));
    out.emplace_back(biases[l].data(), static_cast<std::size_t>(biases[l].size()));
  }
  return out;
}

Mlp::Mlp(std::vector<int> layer_sizes) : sizes_(std::move(layer_sizes)) {
  if (sizes_.size() < 2) throw ConfigError("Mlp needs at least an input and an output size");
  for (int s : sizes_)
    if (s <= 0) throw ConfigError("Mlp layer sizes must be positive");
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    weights_.push_back(Eigen::MatrixXd::Zero(sizes_[l + 1], sizes_[l]));
    biases_.push_back(Eigen::VectorXd::Zero(sizes_[l + 1]));
  }
}

Mlp Mlp::he_uniform(std::vector<int> layer_sizes, Rng& rng) {
  Mlp net(std::move(layer_sizes));
  for (auto& w : net.weights_) {
    const double bound = std::sqrt(6.0 / static_cast<double>(w.cols()));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = dist(rng);
  }
  return net;
}

std::size_t Mlp::num_parameters() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l)
    n += static_cast<std::size_t>(weights_[l].size() + biases_[l].size());
  return n;
}

void Mlp::check_input(Eigen::Index rows) const {
  if (sizes_.empty()) throw ShapeError("Mlp: network has no layers");
  if (rows != sizes_.front())
    throw ShapeError("Mlp: input has " + std::to_string(rows) + " features, expected " +
                     std::to_string(sizes_.front()));
}

Eigen::VectorXd Mlp::forward_one(const Eigen::VectorXd& input) const {
  Eigen::MatrixXd out = forward(Eigen::MatrixXd(input));
  return out.col(0);
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& input) const {
  check_input(input.rows());
  Eigen::MatrixXd a = input;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    Eigen::MatrixXd h = weights_[l] * a;
    h.colwise() += biases_[l];
    if (l + 1 < weights_.size())
      a = elu(h.array()).matrix();
    else
      a = std::move(h);
  }
  return a;
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& input, ForwardCache& cache) const {
  check_input(input.rows());
  const std::size_t n = weights_.size();
  cache.activations.resize(n + 1);
  cache.pre_activations.resize(n);
  cache.activations[0] = input;
  for (std::size_t l = 0; l < n; ++l) {
    Eigen::MatrixXd& h = cache.pre_activations[l];
    h.noalias() = weights_[l] * cache.activations[l];
    h.colwise() += biases_[l];
    if (l + 1 < n)
      cache.activations[l + 1] = elu(h.array()).matrix();
    else
      cache.activations[l + 1] = h;
  }
  return cache.activations[n];
}

MlpGradient Mlp::backward(const ForwardCache& cache, const Eigen::MatrixXd& d_output,
                          Eigen::MatrixXd* d_input) const {
  const std::size_t n = weights_.size();
  if (cache.pre_activations.size() != n || cache.activations.size() != n + 1)
    throw ShapeError("Mlp::backward: cache does not belong to this network");
  if (d_output.rows() != sizes_.back() || d_output.cols() != cache.activations[n].cols())
    throw ShapeError("Mlp::backward: d_output shape mismatch");

  MlpGradient grad;
  grad.weights.resize(n);
  grad.biases.resize(n);
  Eigen::MatrixXd delta = d_output;  // dLoss/d pre-activation of layer l
  for (std::size_t l = n; l-- > 0;) {
    grad.weights[l].noalias() = delta * cache.activations[l].transpose();
    grad.biases[l] = delta.rowwise().sum();
    if (l == 0 && d_input == nullptr) break;
    Eigen::MatrixXd d_act = weights_[l].transpose() * delta;
    if (l == 0) {
      *d_input = std::move(d_act);
      break;
    }
    delta = (d_act.array() * elu_derivative_from_output(cache.activations[l].array())).matrix();
  }
  return grad;
}

MlpGradient Mlp::zero_gradient() const {
  MlpGradient g;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    g.weights.push_back(Eigen::MatrixXd::Zero(weights_[l].rows(), weights_[l].cols()));
    g.biases.push_back(Eigen::VectorXd::Zero(biases_[l].size()));
  }
  return g;
}

std::vector<ParamView> Mlp::parameters(bool decay) {
  std::vector<ParamView> out;
  out.reserve(2 * weights_.size());
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    out.push_back({{weights_[l].data(), static_cast<std::size_t>(weights_[l].size())}, decay});
    out.push_back({{biases_[l].data(), static_cast<std::size_t>(biases_[l].size())}, decay});
  }
  return out;
}

bool Mlp::all_finite() const {
  for (std::size_t l = 0; l < weights_.size(); ++l)
    if (!weights_[l].allFinite() || !biases_[l].allFinite()) return false;
  return true;
}

std::string to_checkpoint(const Mlp& net) { return detail::mlp_to_json(net).dump(); }

Mlp mlp_from_checkpoint(std::string_view text) {
  return detail::mlp_from_json(detail::parse_json(text, "mlp checkpoint"));
}

}  // namespace ceme::nnet

namespace ceme::detail {

json mlp_to_json(const nnet::Mlp& net) {
  json j;
  j["format"] = "ceme-mlp-v1";
  j["layer_sizes"] = net.layer_sizes();
  json weights = json::array();
  json biases = json::array();
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    const auto& w = net.weight(l);
    std::vector<double> flat;
    flat.reserve(static_cast<std::size_t>(w.size()));
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      for (Eigen::Index k = 0; k < w.cols(); ++k) flat.push_back(w(i, k));
    weights.push_back(flat);
    const auto& b = net.bias(l);
    biases.push_back(std::vector<double>(b.data(), b.data() + b.size()));
  }
  j["weights"] = std::move(weights);
  j["biases"] = std::move(biases);
  return j;
}

nnet::Mlp mlp_from_json(const json& j) {
  try {
    if (j.at("format").get<std::string>() != "ceme-mlp-v1")
      throw IoError("mlp checkpoint: unknown format tag");
    nnet::Mlp net(j.at("layer_sizes").get<std::vector<int>>());
    const auto& weights = j.at("weights");
    const auto& biases = j.at("biases");
    if (weights.size() != net.num_layers() || biases.size() != net.num_layers())
      throw IoError("mlp checkpoint: layer count mismatch");
    for (std::size_t l = 0; l < net.num_layers(); ++l) {
      auto flat = weights[l].get<std::vector<double>>();
      auto& w = net.weight(l);
      if (flat.size() != static_cast<std::size_t>(w.size()))
        throw IoError("mlp checkpoint: weight size mismatch in layer " + std::to_string(l));
      std::size_t idx = 0;
      for (Eigen::Index i = 0; i < w.rows(); ++i)
        for (Eigen::Index k = 0; k < w.cols(); ++k) w(i, k) = flat[idx++];
      auto b = biases[l].get<std::vector<double>>();
      if (b.size() != static_cast<std::size_t>(net.bias(l).size()))
        throw IoError("mlp checkpoint: bias size mismatch in layer " + std::to_string(l));
      net.bias(l) = Eigen::Map<const Eigen::VectorXd>(b.data(), static_cast<Eigen::Index>(b.size()));
    }
    return net;
  } catch (const json::exception& e) {
    throw IoError(std::string("mlp checkpoint: ") + e.what());
  }
}

json parse_json(std::string_view text, std::string_view what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw IoError(std::string(what) + ": " + e.what());
  }
}

json read_json_file(const std::filesystem::path& path) {
  return parse_json(read_text(path), path.string());
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out << text;
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace ceme::detail
