#include "dipp/mlp.hpp"

#include <cmath>

#include "dipp/errors.hpp"

namespace dipp {

namespace {

void apply_activation(Activation act, const RowMatrix& pre, RowMatrix& out) {
  switch (act) {
    case Activation::tanh:
      out = pre.array().tanh();
      break;
    case Activation::silu:
      out = pre.array() / (1.0 + (-pre.array()).exp());
      break;
  }
}

// Multiplies `grad` in place by the activation derivative.
void scale_by_derivative(Activation act, const RowMatrix& pre, const RowMatrix& post,
                         RowMatrix& grad) {
  switch (act) {
    case Activation::tanh:
      grad.array() *= 1.0 - post.array().square();
      break;
    case Activation::silu: {
      RowMatrix sig = 1.0 / (1.0 + (-pre.array()).exp());
      grad.array() *= sig.array() * (1.0 + pre.array() * (1.0 - sig.array()));
      break;
    }
  }
}

}  // namespace

const char* activation_name(Activation act) {
  switch (act) {
    case Activation::tanh:
      return "tanh";
    case Activation::silu:
      return "silu";
  }
  return "?";
}

Activation parse_activation(const std::string& name) {
  if (name == "tanh") return Activation::tanh;
  if (name == "silu") return Activation::silu;
  throw ConfigError("unknown activation '" + name + "' (expected tanh or silu)");
}

MlpNet::MlpNet(std::vector<std::size_t> widths, Activation activation)
    : widths_(std::move(widths)), activation_(activation) {
  if (widths_.size() < 2) throw ConfigError("an MLP needs at least an input and an output width");
  for (std::size_t w : widths_) {
    if (w == 0) throw ConfigError("MLP layer widths must be positive");
  }
  std::size_t offset = 0;
  for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
    offsets_.push_back(offset);
    offset += widths_[l] * widths_[l + 1] + widths_[l + 1];
  }
  params_.assign(offset, 0.0);
}

void MlpNet::init_random(Rng& rng) {
  for (std::size_t l = 0; l < layer_count(); ++l) {
    const double limit = std::sqrt(6.0 / static_cast<double>(widths_[l] + widths_[l + 1]));
    auto w = weight(l);
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
      for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = limit * (2.0 * rng.uniform() - 1.0);
    }
    bias(l).setZero();
  }
}

std::vector<ParamBlock> MlpNet::blocks() const {
  std::vector<ParamBlock> out;
  for (std::size_t l = 0; l < layer_count(); ++l) {
    out.push_back({"layer" + std::to_string(l) + ".weight", weight_offset(l),
                   widths_[l] * widths_[l + 1]});
    out.push_back({"layer" + std::to_string(l) + ".bias", bias_offset(l), widths_[l + 1]});
  }
  return out;
}

Eigen::Map<RowMatrix> MlpNet::weight(std::size_t layer) {
  return {params_.data() + weight_offset(layer), static_cast<Eigen::Index>(widths_[layer + 1]),
          static_cast<Eigen::Index>(widths_[layer])};
}

Eigen::Map<const RowMatrix> MlpNet::weight(std::size_t layer) const {
  return {params_.data() + weight_offset(layer), static_cast<Eigen::Index>(widths_[layer + 1]),
          static_cast<Eigen::Index>(widths_[layer])};
}

Eigen::Map<Eigen::RowVectorXd> MlpNet::bias(std::size_t layer) {
  return {params_.data() + bias_offset(layer), static_cast<Eigen::Index>(widths_[layer + 1])};
}

Eigen::Map<const Eigen::RowVectorXd> MlpNet::bias(std::size_t layer) const {
  return {params_.data() + bias_offset(layer), static_cast<Eigen::Index>(widths_[layer + 1])};
}

Tensor net_forward(const MlpNet& net, const Tensor& input) {
  MlpTape tape;
  return net_forward(net, input, tape);
}

Tensor net_forward(const MlpNet& net, const Tensor& input, MlpTape& tape) {
  if (input.rank() != 2 || input.cols() != net.input_width()) {
    throw DimensionError("net_forward: input shape " + shape_string(input.shape()) +
                         " does not match network input width " +
                         std::to_string(net.input_width()));
  }
  const std::size_t layers = net.layer_count();
  tape.inputs.resize(layers);
  tape.preacts.resize(layers);
  tape.inputs[0] = input.matrix();
  RowMatrix out;
  for (std::size_t l = 0; l < layers; ++l) {
    RowMatrix pre = tape.inputs[l] * net.weight(l).transpose();
    pre.rowwise() += net.bias(l);
    if (l + 1 < layers) {
      apply_activation(net.activation(), pre, tape.inputs[l + 1]);
      tape.preacts[l] = std::move(pre);
    } else {
      out = std::move(pre);
    }
  }
  return Tensor::from_matrix(out);
}

MlpGradients net_backward(const MlpNet& net, const Tensor& input, const Tensor& cotangent) {
  MlpTape tape;
  net_forward(net, input, tape);
  return net_backward(net, tape, cotangent);
}

MlpGradients net_backward(const MlpNet& net, const MlpTape& tape, const Tensor& cotangent) {
  const std::size_t layers = net.layer_count();
  if (tape.inputs.size() != layers) throw DimensionError("net_backward: tape does not match network");
  const auto batch = static_cast<std::size_t>(tape.inputs[0].rows());
  if (cotangent.rank() != 2 || cotangent.rows() != batch || cotangent.cols() != net.output_width()) {
    throw DimensionError("net_backward: cotangent shape " + shape_string(cotangent.shape()) +
                         " does not match output shape " +
                         shape_string({batch, net.output_width()}));
  }

  MlpGradients grads;
  grads.params.assign(net.param_count(), 0.0);
  const auto blocks = net.blocks();

  RowMatrix g = cotangent.matrix();
  for (std::size_t l = layers; l-- > 0;) {
    if (l + 1 < layers) scale_by_derivative(net.activation(), tape.preacts[l], tape.inputs[l + 1], g);
    const ParamBlock& wb = blocks[2 * l];
    const ParamBlock& bb = blocks[2 * l + 1];
    Eigen::Map<RowMatrix> dw(grads.params.data() + wb.offset, static_cast<Eigen::Index>(net.widths()[l + 1]),
                             static_cast<Eigen::Index>(net.widths()[l]));
    Eigen::Map<Eigen::RowVectorXd> db(grads.params.data() + bb.offset,
                                      static_cast<Eigen::Index>(net.widths()[l + 1]));
    dw.noalias() = g.transpose() * tape.inputs[l];
    db = g.colwise().sum();
    RowMatrix next = g * net.weight(l);
    g = std::move(next);
  }
  grads.input = Tensor::from_matrix(g);
  return grads;
}

}  // namespace dipp
