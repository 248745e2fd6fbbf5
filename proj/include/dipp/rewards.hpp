#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "dipp/mixture.hpp"

namespace dipp {

// r(x, c) = -scale * ||x - target_c||^2
struct QuadraticReward {
  std::vector<std::vector<double>> targets;  // one per condition
  double scale = 0.5;
};

// A mixture density, either conditional on the reward's condition or
// marginalized over conditions.
struct MixtureDensity {
  std::shared_ptr<const GaussianMixture> mixture;
  bool conditional = true;
};

// r(x_t, t, c) = w(t) * [log p_num(x_t | t, c) - log p_den(x_t | t, c)]
// The classifier-free guidance reward uses the conditional reference as
// numerator and the unconditional one as denominator.
struct LogRatioReward {
  MixtureDensity numerator;
  MixtureDensity denominator;
  std::function<double(double)> weight = [](double) { return 1.0; };
};

using RewardSpec = std::variant<QuadraticReward, LogRatioReward>;

LogRatioReward cfg_log_ratio_reward(std::shared_ptr<const GaussianMixture> mix,
                                    std::function<double(double)> weight = [](double) { return 1.0; });

// Quadratic reward whose target for condition c is the mean of that
// condition's component `component`.
QuadraticReward quadratic_toward_component(const GaussianMixture& mix, std::size_t component,
                                           double scale = 0.5);

bool reward_needs_time(const RewardSpec& spec);

double reward_eval(const RewardSpec& spec, std::span<const double> x, int condition,
                   std::optional<double> t = std::nullopt);
std::vector<double> reward_grad(const RewardSpec& spec, std::span<const double> x, int condition,
                                std::optional<double> t = std::nullopt);

// Batched: one value per row / one gradient row per row.
std::vector<double> reward_eval(const RewardSpec& spec, const Tensor& x, std::span<const int> conditions,
                                std::span<const double> t = {});
Tensor reward_grad(const RewardSpec& spec, const Tensor& x, std::span<const int> conditions,
                   std::span<const double> t = {});

}  // namespace dipp
