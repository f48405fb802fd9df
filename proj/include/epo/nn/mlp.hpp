#pragma once

#include <cstddef>
#include <random>
#include <vector>

#include <Eigen/Dense>

namespace epo::nn {

/// Flat parameter array. Layout is owned by whichever network produced it.
using ParamVector = Eigen::VectorXd;

enum class Activation : unsigned { Tanh = 1 };

/// Activations recorded during a batched forward pass, consumed by backward().
struct ForwardCache {
  // inputs[l] is the input to affine layer l (columns are samples);
  // inputs.back() holds the network output.
  std::vector<Eigen::MatrixXd> inputs;

  const Eigen::MatrixXd& output() const { return inputs.back(); }
};

/**
 * Feedforward network: affine layers with tanh on every hidden layer and
 * identity on the output.
 *
 * Flatten order is layer by layer, weights row-major (one row per output
 * unit) followed by that layer's biases. Checkpoints depend on this order.
 */
class Mlp {
 public:
  Mlp() = default;
  explicit Mlp(std::vector<int> layer_sizes);

  const std::vector<int>& layer_sizes() const { return layer_sizes_; }
  int input_dim() const { return layer_sizes_.front(); }
  int output_dim() const { return layer_sizes_.back(); }
  std::size_t layer_count() const { return weights_.size(); }
  std::size_t parameter_count() const;
  Activation activation() const { return Activation::Tanh; }

  Eigen::MatrixXd& weights(std::size_t layer) { return weights_.at(layer); }
  const Eigen::MatrixXd& weights(std::size_t layer) const { return weights_.at(layer); }
  Eigen::VectorXd& biases(std::size_t layer) { return biases_.at(layer); }
  const Eigen::VectorXd& biases(std::size_t layer) const { return biases_.at(layer); }

  Eigen::VectorXd forward(const Eigen::VectorXd& x) const;
  Eigen::MatrixXd forward_batch(const Eigen::MatrixXd& inputs) const;
  ForwardCache forward_cached(const Eigen::MatrixXd& inputs) const;

  /// Gradient of upstream . forward(x) with respect to the parameters.
  ParamVector backward(const Eigen::VectorXd& x, const Eigen::VectorXd& upstream) const;
  /// Same as backward() summed over the columns of the cached batch.
  ParamVector backward(const ForwardCache& cache, const Eigen::MatrixXd& upstream) const;

  ParamVector flatten() const;
  void unflatten(const ParamVector& params);

  /// Orthogonal hidden layers scaled by hidden_gain, output layer by output_gain, zero biases.
  void init_orthogonal(std::mt19937_64& rng, double hidden_gain, double output_gain);

 private:
  void check_input_rows(Eigen::Index rows) const;

  std::vector<int> layer_sizes_;
  std::vector<Eigen::MatrixXd> weights_;
  std::vector<Eigen::VectorXd> biases_;
};

/// Default architecture: `hidden_layers` tanh layers of `hidden_size` units.
std::vector<int> make_layer_sizes(int input_dim, int hidden_layers, int hidden_size, int output_dim);

}  // namespace epo::nn
