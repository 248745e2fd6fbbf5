#pragma once

#include <span>
#include <vector>

#include "dipp/denoiser.hpp"

namespace dipp {

inline constexpr double kDefaultSigmaInit = 2.5;

/// One-step generator x0 = d_theta(z, sigma_init, c) with z ~ N(0, sigma_init^2 I).
///
/// The backbone is a DenoiserNet evaluated at the fixed noise level
/// sigma_init, so a reference denoiser can be copied in directly.
class OneStepGenerator {
 public:
  OneStepGenerator() = default;
  OneStepGenerator(DenoiserNet net, double sigma_init = kDefaultSigmaInit);

  const DenoiserNet& net() const { return net_; }
  DenoiserNet& net() { return net_; }
  double sigma_init() const { return sigma_init_; }
  std::size_t dim() const { return net_.dim(); }
  std::size_t num_conditions() const { return net_.num_conditions(); }
  std::span<double> params() { return net_.params(); }
  std::span<const double> params() const { return net_.params(); }

  Tensor sample_latent(std::size_t batch, Rng& rng) const;
  Tensor generate(const Tensor& z, std::span<const int> conditions) const;
  Tensor generate(const Tensor& z, std::span<const int> conditions, DenoiserTape& tape) const;
  // Parameter gradient of <cotangent, generate(z, c)>.
  std::vector<double> backward(const DenoiserTape& tape, const Tensor& cotangent) const;

 private:
  void check_conditions(std::span<const int> conditions) const;

  DenoiserNet net_;
  double sigma_init_ = kDefaultSigmaInit;
};

// Parameter-wise copy of `ref`; the result shares nothing with it.
OneStepGenerator init_from_reference(const DenoiserNet& ref, double sigma_init = kDefaultSigmaInit);
// As above, but rejects a reference whose architecture differs from `expected`.
OneStepGenerator init_from_reference(const DenoiserNet& ref, const DenoiserArch& expected,
                                     double sigma_init = kDefaultSigmaInit);

}  // namespace dipp
