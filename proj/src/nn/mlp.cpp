#include "epo/nn/mlp.hpp"

#include <stdexcept>
#include <string>

namespace epo::nn {

namespace {

// tanh through the vectorized exp; Eigen's double tanh is scalar. Absolute error ~3e-16.
template <typename Derived>
Eigen::MatrixXd activate(const Eigen::MatrixBase<Derived>& z) {
  return (1.0 - 2.0 / ((2.0 * z.array()).exp() + 1.0)).matrix();
}

}  // namespace

Mlp::Mlp(std::vector<int> layer_sizes) : layer_sizes_(std::move(layer_sizes)) {
  if (layer_sizes_.size() < 2) {
    throw std::invalid_argument("Mlp needs at least an input and an output size");
  }
  for (int n : layer_sizes_) {
    if (n <= 0) throw std::invalid_argument("Mlp layer sizes must be positive");
  }
  for (std::size_t l = 0; l + 1 < layer_sizes_.size(); ++l) {
    weights_.emplace_back(Eigen::MatrixXd::Zero(layer_sizes_[l + 1], layer_sizes_[l]));
    biases_.emplace_back(Eigen::VectorXd::Zero(layer_sizes_[l + 1]));
  }
}

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    n += static_cast<std::size_t>(weights_[l].size() + biases_[l].size());
  }
  return n;
}

void Mlp::check_input_rows(Eigen::Index rows) const {
  if (layer_sizes_.empty() || rows != layer_sizes_.front()) {
    throw std::invalid_argument("Mlp input dimension mismatch: got " + std::to_string(rows) +
                                ", expected " +
                                std::to_string(layer_sizes_.empty() ? 0 : layer_sizes_.front()));
  }
}

Eigen::VectorXd Mlp::forward(const Eigen::VectorXd& x) const {
  check_input_rows(x.size());
  Eigen::VectorXd h = x;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    Eigen::VectorXd z = weights_[l] * h + biases_[l];
    h = (l + 1 < weights_.size()) ? Eigen::VectorXd(activate(z)) : z;
  }
  return h;
}

Eigen::MatrixXd Mlp::forward_batch(const Eigen::MatrixXd& inputs) const {
  check_input_rows(inputs.rows());
  Eigen::MatrixXd h = inputs;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    Eigen::MatrixXd z = weights_[l] * h;
    z.colwise() += biases_[l];
    if (l + 1 < weights_.size()) z = activate(z);
    h = std::move(z);
  }
  return h;
}

ForwardCache Mlp::forward_cached(const Eigen::MatrixXd& inputs) const {
  check_input_rows(inputs.rows());
  ForwardCache cache;
  cache.inputs.reserve(weights_.size() + 1);
  cache.inputs.push_back(inputs);
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    Eigen::MatrixXd z = weights_[l] * cache.inputs.back();
    z.colwise() += biases_[l];
    if (l + 1 < weights_.size()) z = activate(z);
    cache.inputs.push_back(std::move(z));
  }
  return cache;
}

ParamVector Mlp::backward(const Eigen::VectorXd& x, const Eigen::VectorXd& upstream) const {
  Eigen::MatrixXd in = x;
  Eigen::MatrixXd up = upstream;
  return backward(forward_cached(in), up);
}

ParamVector Mlp::backward(const ForwardCache& cache, const Eigen::MatrixXd& upstream) const {
  if (cache.inputs.size() != weights_.size() + 1) {
    throw std::invalid_argument("Mlp::backward: cache does not belong to this network");
  }
  if (upstream.rows() != output_dim() || upstream.cols() != cache.output().cols()) {
    throw std::invalid_argument("Mlp::backward: upstream shape mismatch");
  }
  ParamVector grad(static_cast<Eigen::Index>(parameter_count()));

  // Offsets of each layer's block inside the flat vector.
  std::vector<Eigen::Index> offset(weights_.size());
  Eigen::Index pos = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    offset[l] = pos;
    pos += weights_[l].size() + biases_[l].size();
  }

  Eigen::MatrixXd delta = upstream;  // d/dz of the current layer's pre-activation
  for (std::size_t li = weights_.size(); li-- > 0;) {
    const Eigen::MatrixXd& a_in = cache.inputs[li];
    const Eigen::Index rows = weights_[li].rows();
    const Eigen::Index cols = weights_[li].cols();
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> gw(
        grad.data() + offset[li], rows, cols);
    gw.noalias() = delta * a_in.transpose();
    grad.segment(offset[li] + rows * cols, rows) = delta.rowwise().sum();
    if (li > 0) {
      Eigen::MatrixXd back = weights_[li].transpose() * delta;
      // a_in = tanh(z) for hidden layers, so dz = back * (1 - a^2).
      delta = back.array() * (1.0 - a_in.array().square());
    }
  }
  return grad;
}

ParamVector Mlp::flatten() const {
  ParamVector out(static_cast<Eigen::Index>(parameter_count()));
  Eigen::Index pos = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    const Eigen::Index rows = weights_[l].rows();
    const Eigen::Index cols = weights_[l].cols();
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        out.data() + pos, rows, cols) = weights_[l];
    pos += rows * cols;
    out.segment(pos, rows) = biases_[l];
    pos += rows;
  }
  return out;
}

void Mlp::unflatten(const ParamVector& params) {
  if (params.size() != static_cast<Eigen::Index>(parameter_count())) {
    throw std::invalid_argument("Mlp::unflatten: expected " + std::to_string(parameter_count()) +
                                " parameters, got " + std::to_string(params.size()));
  }
  Eigen::Index pos = 0;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    const Eigen::Index rows = weights_[l].rows();
    const Eigen::Index cols = weights_[l].cols();
    weights_[l] = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        params.data() + pos, rows, cols);
    pos += rows * cols;
    biases_[l] = params.segment(pos, rows);
    pos += rows;
  }
}

namespace {

Eigen::MatrixXd orthogonal(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  const Eigen::Index big = std::max(rows, cols);
  const Eigen::Index small = std::min(rows, cols);
  Eigen::MatrixXd g(big, small);
  for (Eigen::Index j = 0; j < small; ++j) {
    for (Eigen::Index i = 0; i < big; ++i) g(i, j) = normal(rng);
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(big, small);
  // Sign fix so the result is uniformly distributed (Mezzadri).
  Eigen::VectorXd d = qr.matrixQR().diagonal();
  for (Eigen::Index j = 0; j < small; ++j) {
    if (d(j) < 0.0) q.col(j) = -q.col(j);
  }
  return rows >= cols ? q : Eigen::MatrixXd(q.transpose());
}

}  // namespace

void Mlp::init_orthogonal(std::mt19937_64& rng, double hidden_gain, double output_gain) {
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    const double gain = (l + 1 < weights_.size()) ? hidden_gain : output_gain;
    weights_[l] = gain * orthogonal(weights_[l].rows(), weights_[l].cols(), rng);
    biases_[l].setZero();
  }
}

std::vector<int> make_layer_sizes(int input_dim, int hidden_layers, int hidden_size, int output_dim) {
  std::vector<int> sizes{input_dim};
  for (int i = 0; i < hidden_layers; ++i) sizes.push_back(hidden_size);
  sizes.push_back(output_dim);
  return sizes;
}

}  // namespace epo::nn
