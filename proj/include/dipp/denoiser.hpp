#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "dipp/diffusion.hpp"
#include "dipp/mixture.hpp"
#include "dipp/mlp.hpp"
#include "dipp/optim.hpp"

namespace dipp {

/// Anything that maps a noisy batch to a clean-sample estimate d(x_t, t, c).
/// Condition kNullCondition requests the unconditional estimate.
class Denoiser {
 public:
  virtual ~Denoiser() = default;
  virtual std::size_t dim() const = 0;
  virtual std::size_t num_conditions() const = 0;
  virtual Tensor denoise(const Tensor& x, std::span<const double> t,
                         std::span<const int> conditions) const = 0;
};

struct DenoiserArch {
  std::size_t dim = 2;
  std::size_t num_conditions = 1;
  std::vector<std::size_t> hidden = {64, 64, 64};
  Activation activation = Activation::tanh;
  double sigma_data = kDefaultSigmaData;

  bool operator==(const DenoiserArch&) const = default;
  std::string describe() const;
};

inline constexpr std::size_t kTimeEmbeddingWidth = 9;  // scaled log t + 4 sin + 4 cos

struct DenoiserTape {
  Tensor features;
  MlpTape mlp;
  std::vector<double> c_out;
  std::vector<double> c_skip;
};

/// Conditional denoiser network with EDM preconditioning.
///
/// The MLP sees [c_in * x, time embedding, one-hot(c)] where the one-hot has
/// an extra slot for the null condition. Output is
/// d = c_skip(t) x + c_out(t) F(...), so the lambda_edm-weighted regression
/// loss is a unit-weighted loss on F.
class DenoiserNet : public Denoiser {
 public:
  DenoiserNet() = default;
  explicit DenoiserNet(DenoiserArch arch);
  DenoiserNet(DenoiserArch arch, Rng& init_rng);

  const DenoiserArch& arch() const { return arch_; }
  const MlpNet& net() const { return net_; }
  MlpNet& net() { return net_; }
  std::span<double> params() { return net_.params(); }
  std::span<const double> params() const { return net_.params(); }

  std::size_t dim() const override { return arch_.dim; }
  std::size_t num_conditions() const override { return arch_.num_conditions; }
  Tensor denoise(const Tensor& x, std::span<const double> t,
                 std::span<const int> conditions) const override;
  Tensor denoise(const Tensor& x, std::span<const double> t, std::span<const int> conditions,
                 DenoiserTape& tape) const;

  // Parameter gradient of <cotangent, d>.
  std::vector<double> backward(const DenoiserTape& tape, const Tensor& cotangent) const;

  Tensor features(const Tensor& x, std::span<const double> t, std::span<const int> conditions,
                  std::vector<double>* c_skip = nullptr, std::vector<double>* c_out = nullptr) const;

 private:
  DenoiserArch arch_;
  MlpNet net_;
};

/// Exact posterior-mean denoiser of a Gaussian mixture: d = x + t^2 score.
class MixtureDenoiser : public Denoiser {
 public:
  explicit MixtureDenoiser(std::shared_ptr<const GaussianMixture> mix) : mix_(std::move(mix)) {}
  std::size_t dim() const override { return mix_->dim(); }
  std::size_t num_conditions() const override { return mix_->num_conditions(); }
  Tensor denoise(const Tensor& x, std::span<const double> t,
                 std::span<const int> conditions) const override;
  const GaussianMixture& mixture() const { return *mix_; }

 private:
  std::shared_ptr<const GaussianMixture> mix_;
};

// Returns clean samples x0 for the given conditions.
using DataSampler = std::function<Tensor(std::span<const int> conditions, Rng& rng)>;

DataSampler mixture_sampler(std::shared_ptr<const GaussianMixture> mix);
DataSampler point_mass_sampler(std::vector<double> point);

struct DsmBatch {
  Tensor x0;
  std::vector<int> conditions;
  std::vector<double> t;
  Tensor noise;
};

// Mean over the batch of lambda_edm(t) * ||d(x_t, t, c) - x0||^2, with the
// parameter gradient written to `grad` when non-null.
double dsm_loss(const DenoiserNet& model, const DsmBatch& batch, std::vector<double>* grad);

struct DsmOptions {
  std::size_t steps = 1000;
  std::size_t batch = 256;
  double condition_drop = 0.1;  // probability of replacing c by the null condition
  double final_lr_scale = 1.0;  // cosine decay of the learning rate to lr * final_lr_scale
};

/// Trains `model` in place on the weighted denoising regression objective.
/// Returns the per-step loss trace.
std::vector<double> dsm_train(DenoiserNet& model, const DataSampler& data, const TimeSampler& sampler,
                              AdamState& optimizer, const DsmOptions& options, Rng& rng);

}  // namespace dipp
