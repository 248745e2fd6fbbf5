#include "dipp/generator.hpp"

#include "dipp/errors.hpp"

namespace dipp {

OneStepGenerator::OneStepGenerator(DenoiserNet net, double sigma_init)
    : net_(std::move(net)), sigma_init_(sigma_init) {
  if (!(sigma_init_ > 0.0)) throw ConfigError("sigma_init must be positive");
}

Tensor OneStepGenerator::sample_latent(std::size_t batch, Rng& rng) const {
  Tensor z({batch, dim()});
  for (double& v : z.values()) v = sigma_init_ * rng.normal();
  return z;
}

void OneStepGenerator::check_conditions(std::span<const int> conditions) const {
  for (int c : conditions) {
    if (c < 0 || static_cast<std::size_t>(c) >= num_conditions()) {
      throw ConfigError("generator condition " + std::to_string(c) + " out of range [0, " +
                        std::to_string(num_conditions()) + ")");
    }
  }
}

Tensor OneStepGenerator::generate(const Tensor& z, std::span<const int> conditions) const {
  DenoiserTape tape;
  return generate(z, conditions, tape);
}

Tensor OneStepGenerator::generate(const Tensor& z, std::span<const int> conditions,
                                  DenoiserTape& tape) const {
  check_conditions(conditions);
  const std::vector<double> t(conditions.size(), sigma_init_);
  return net_.denoise(z, t, conditions, tape);
}

std::vector<double> OneStepGenerator::backward(const DenoiserTape& tape, const Tensor& cotangent) const {
  return net_.backward(tape, cotangent);
}

OneStepGenerator init_from_reference(const DenoiserNet& ref, double sigma_init) {
  return OneStepGenerator(ref, sigma_init);
}

OneStepGenerator init_from_reference(const DenoiserNet& ref, const DenoiserArch& expected,
                                     double sigma_init) {
  if (!(ref.arch() == expected)) {
    throw ConfigError("reference architecture (" + ref.arch().describe() +
                      ") does not match generator architecture (" + expected.describe() + ")");
  }
  return OneStepGenerator(ref, sigma_init);
}

}  // namespace dipp
