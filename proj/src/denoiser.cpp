#include "dipp/denoiser.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "dipp/errors.hpp"

namespace dipp {

namespace {

constexpr double kEmbeddingFrequencies[4] = {0.25, 0.5, 1.0, 2.0};

std::vector<std::size_t> mlp_widths(const DenoiserArch& arch) {
  std::vector<std::size_t> widths;
  widths.push_back(arch.dim + kTimeEmbeddingWidth + arch.num_conditions + 1);
  widths.insert(widths.end(), arch.hidden.begin(), arch.hidden.end());
  widths.push_back(arch.dim);
  return widths;
}

void check_batch(std::size_t dim, std::size_t conditions_count, const Tensor& x,
                 std::span<const double> t, std::span<const int> conditions) {
  if (x.rank() != 2 || x.cols() != dim) {
    throw DimensionError("denoiser input shape " + shape_string(x.shape()) +
                         " does not match dimension " + std::to_string(dim));
  }
  if (t.size() != x.rows() || conditions.size() != x.rows()) {
    throw DimensionError("denoiser: " + std::to_string(x.rows()) + " samples but " +
                         std::to_string(t.size()) + " times and " +
                         std::to_string(conditions.size()) + " conditions");
  }
  for (int c : conditions) {
    if (c != kNullCondition && (c < 0 || static_cast<std::size_t>(c) >= conditions_count)) {
      throw ConfigError("condition index " + std::to_string(c) + " out of range [0, " +
                        std::to_string(conditions_count) + ")");
    }
  }
  for (double v : t) {
    if (!(v > 0.0)) throw DomainError("denoiser requires t > 0, got " + std::to_string(v));
  }
}

}  // namespace

std::string DenoiserArch::describe() const {
  std::ostringstream os;
  os << "dim=" << dim << " conditions=" << num_conditions << " hidden=";
  for (std::size_t i = 0; i < hidden.size(); ++i) os << (i ? "x" : "") << hidden[i];
  os << " activation=" << activation_name(activation) << " sigma_data=" << sigma_data;
  return os.str();
}

DenoiserNet::DenoiserNet(DenoiserArch arch)
    : arch_(std::move(arch)), net_(mlp_widths(arch_), arch_.activation) {
  if (!(arch_.sigma_data > 0.0)) throw ConfigError("sigma_data must be positive");
}

DenoiserNet::DenoiserNet(DenoiserArch arch, Rng& init_rng) : DenoiserNet(std::move(arch)) {
  net_.init_random(init_rng);
}

Tensor DenoiserNet::features(const Tensor& x, std::span<const double> t,
                             std::span<const int> conditions, std::vector<double>* c_skip,
                             std::vector<double>* c_out) const {
  check_batch(arch_.dim, arch_.num_conditions, x, t, conditions);
  const std::size_t n = x.rows();
  Tensor f({n, net_.input_width()});
  if (c_skip) c_skip->resize(n);
  if (c_out) c_out->resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Preconditioning p = edm_preconditioning(t[i], arch_.sigma_data);
    if (c_skip) (*c_skip)[i] = p.c_skip;
    if (c_out) (*c_out)[i] = p.c_out;
    std::size_t col = 0;
    for (std::size_t j = 0; j < arch_.dim; ++j) f(i, col++) = p.c_in * x(i, j);
    const double log_t = std::log(t[i]);
    f(i, col++) = p.c_noise;
    for (double w : kEmbeddingFrequencies) f(i, col++) = std::sin(w * log_t);
    for (double w : kEmbeddingFrequencies) f(i, col++) = std::cos(w * log_t);
    const std::size_t slot =
        conditions[i] == kNullCondition ? arch_.num_conditions : static_cast<std::size_t>(conditions[i]);
    f(i, col + slot) = 1.0;
  }
  return f;
}

Tensor DenoiserNet::denoise(const Tensor& x, std::span<const double> t,
                            std::span<const int> conditions) const {
  DenoiserTape tape;
  return denoise(x, t, conditions, tape);
}

Tensor DenoiserNet::denoise(const Tensor& x, std::span<const double> t,
                            std::span<const int> conditions, DenoiserTape& tape) const {
  tape.features = features(x, t, conditions, &tape.c_skip, &tape.c_out);
  Tensor out = net_forward(net_, tape.features, tape.mlp);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = 0; j < arch_.dim; ++j) {
      out(i, j) = tape.c_skip[i] * x(i, j) + tape.c_out[i] * out(i, j);
    }
  }
  return out;
}

std::vector<double> DenoiserNet::backward(const DenoiserTape& tape, const Tensor& cotangent) const {
  if (cotangent.rank() != 2 || cotangent.rows() != tape.c_out.size() || cotangent.cols() != arch_.dim) {
    throw DimensionError("denoiser backward: cotangent shape " + shape_string(cotangent.shape()));
  }
  Tensor scaled(cotangent.shape());
  for (std::size_t i = 0; i < cotangent.rows(); ++i) {
    for (std::size_t j = 0; j < cotangent.cols(); ++j) scaled(i, j) = tape.c_out[i] * cotangent(i, j);
  }
  return net_backward(net_, tape.mlp, scaled).params;
}

Tensor MixtureDenoiser::denoise(const Tensor& x, std::span<const double> t,
                                std::span<const int> conditions) const {
  Tensor s = analytic_score(*mix_, x, t, conditions);
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = 0; j < x.cols(); ++j) out(i, j) = x(i, j) + t[i] * t[i] * s(i, j);
  }
  return out;
}

DataSampler mixture_sampler(std::shared_ptr<const GaussianMixture> mix) {
  return [mix = std::move(mix)](std::span<const int> conditions, Rng& rng) {
    return mix->sample(conditions, rng);
  };
}

DataSampler point_mass_sampler(std::vector<double> point) {
  return [point = std::move(point)](std::span<const int> conditions, Rng&) {
    Tensor out({conditions.size(), point.size()});
    for (std::size_t i = 0; i < conditions.size(); ++i) {
      for (std::size_t j = 0; j < point.size(); ++j) out(i, j) = point[j];
    }
    return out;
  };
}

double dsm_loss(const DenoiserNet& model, const DsmBatch& batch, std::vector<double>* grad) {
  const std::size_t n = batch.x0.rows();
  Tensor xt(batch.x0.shape());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < batch.x0.cols(); ++j) {
      xt(i, j) = batch.x0(i, j) + batch.t[i] * batch.noise(i, j);
    }
  }
  DenoiserTape tape;
  const Tensor d = model.denoise(xt, batch.t, batch.conditions, tape);
  const double inv_n = 1.0 / static_cast<double>(n);
  Tensor cot(d.shape());
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double lam = lambda_edm(batch.t[i], model.arch().sigma_data);
    for (std::size_t j = 0; j < d.cols(); ++j) {
      const double r = d(i, j) - batch.x0(i, j);
      loss += lam * r * r;
      cot(i, j) = 2.0 * lam * r * inv_n;
    }
  }
  loss *= inv_n;
  if (grad) *grad = model.backward(tape, cot);
  return loss;
}

std::vector<double> dsm_train(DenoiserNet& model, const DataSampler& data, const TimeSampler& sampler,
                              AdamState& optimizer, const DsmOptions& options, Rng& rng) {
  sampler.validate();
  if (options.batch == 0) throw ConfigError("dsm_train: batch must be positive");
  const auto blocks = model.net().blocks();
  const int conditions = static_cast<int>(model.num_conditions());
  std::vector<double> trace;
  trace.reserve(options.steps);
  std::vector<double> grad;
  const double base_lr = optimizer.config().lr;
  for (std::size_t step = 0; step < options.steps; ++step) {
    if (options.final_lr_scale != 1.0) {
      const double progress = static_cast<double>(step) / static_cast<double>(options.steps);
      const double cosine = 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
      optimizer.config().lr = base_lr * (options.final_lr_scale + (1.0 - options.final_lr_scale) * cosine);
    }
    DsmBatch batch;
    batch.conditions.resize(options.batch);
    for (auto& c : batch.conditions) c = rng.uniform_int(conditions);
    batch.x0 = data(batch.conditions, rng);
    if (batch.x0.rank() != 2 || batch.x0.rows() != options.batch || batch.x0.cols() != model.dim()) {
      throw DimensionError("dsm_train: data sampler returned shape " + shape_string(batch.x0.shape()));
    }
    if (options.condition_drop > 0.0) {
      for (auto& c : batch.conditions) {
        if (rng.uniform() < options.condition_drop) c = kNullCondition;
      }
    }
    batch.t = sample_times(sampler, options.batch, rng);
    batch.noise = Tensor(batch.x0.shape());
    for (double& v : batch.noise.values()) v = rng.normal();

    const double loss = dsm_loss(model, batch, &grad);
    if (!std::isfinite(loss)) {
      throw DivergenceError("dsm_train: non-finite loss at step " + std::to_string(step));
    }
    trace.push_back(loss);
    adam_step(optimizer, model.params(), grad, blocks);
  }
  optimizer.config().lr = base_lr;
  return trace;
}

}  // namespace dipp
