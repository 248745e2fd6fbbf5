#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "dipp/rng.hpp"
#include "dipp/tensor.hpp"

namespace dipp {

enum class Activation { tanh, silu };

const char* activation_name(Activation act);
Activation parse_activation(const std::string& name);

// Contiguous slice of a flat parameter vector, e.g. "layer1.weight".
struct ParamBlock {
  std::string name;
  std::size_t offset = 0;
  std::size_t size = 0;
};

/// Fully connected network with a smooth activation on every hidden layer
/// and a linear output layer.
///
/// All weights and biases live in one flat vector (layer by layer, weight
/// block row-major [out, in] followed by the bias), which is what the
/// optimizers, EMA, and checkpoints operate on.
class MlpNet {
 public:
  MlpNet() = default;
  MlpNet(std::vector<std::size_t> widths, Activation activation = Activation::tanh);

  // Glorot-uniform weights, zero biases.
  void init_random(Rng& rng);

  const std::vector<std::size_t>& widths() const { return widths_; }
  Activation activation() const { return activation_; }
  std::size_t layer_count() const { return widths_.size() - 1; }
  std::size_t input_width() const { return widths_.front(); }
  std::size_t output_width() const { return widths_.back(); }
  std::size_t param_count() const { return params_.size(); }

  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }
  std::vector<ParamBlock> blocks() const;

  Eigen::Map<RowMatrix> weight(std::size_t layer);
  Eigen::Map<const RowMatrix> weight(std::size_t layer) const;
  Eigen::Map<Eigen::RowVectorXd> bias(std::size_t layer);
  Eigen::Map<const Eigen::RowVectorXd> bias(std::size_t layer) const;

  bool same_architecture(const MlpNet& other) const {
    return widths_ == other.widths_ && activation_ == other.activation_;
  }

 private:
  std::size_t weight_offset(std::size_t layer) const { return offsets_[layer]; }
  std::size_t bias_offset(std::size_t layer) const {
    return offsets_[layer] + widths_[layer] * widths_[layer + 1];
  }

  std::vector<std::size_t> widths_;
  Activation activation_ = Activation::tanh;
  std::vector<std::size_t> offsets_;
  std::vector<double> params_;
};

// Intermediate values from a forward pass, consumed by the backward pass.
struct MlpTape {
  std::vector<RowMatrix> inputs;  // input to each layer (post-activation of the previous one)
  std::vector<RowMatrix> preacts;  // pre-activation of each hidden layer
};

struct MlpGradients {
  std::vector<double> params;  // same layout as MlpNet::params()
  Tensor input;                // gradient w.r.t. the network input
};

Tensor net_forward(const MlpNet& net, const Tensor& input);
Tensor net_forward(const MlpNet& net, const Tensor& input, MlpTape& tape);

/// Gradients of <cotangent, net_forward(input)> with respect to every
/// parameter and to the input.
MlpGradients net_backward(const MlpNet& net, const Tensor& input, const Tensor& cotangent);
MlpGradients net_backward(const MlpNet& net, const MlpTape& tape, const Tensor& cotangent);

}  // namespace dipp
