#pragma once

#include <cstddef>
#include <span>

#include "dipp/denoiser.hpp"
#include "dipp/generator.hpp"
#include "dipp/metrics.hpp"
#include "dipp/mixture.hpp"
#include "dipp/rewards.hpp"

namespace dipp {

/// Two-sample energy distance 2 E|X - Y| - E|X - X'| - E|Y - Y'|, with the
/// within-sample terms averaged over distinct pairs.
double energy_distance(const Tensor& a, const Tensor& b);

// Mean of log q(x | c) - log q(x) over the rows, at t = 0.
double mean_cfg_log_ratio(const GaussianMixture& mix, const Tensor& samples, std::span<const int> conditions);

// Conditions 0, 1, ..., C-1, 0, 1, ... of length n.
std::vector<int> balanced_conditions(std::size_t n, std::size_t num_conditions);

/// Metrics of `samples` drawn under `conditions`:
///   mean_reward       (only when reward is non-null)
///   energy_distance   against as many direct mixture samples
///   mean_error_c<k>   distance of the condition-k sample mean to the mixture mean
///   mean_error        the largest of those
///   cfg_log_ratio     see mean_cfg_log_ratio
MetricRecord eval_samples(const Tensor& samples, std::span<const int> conditions, const GaussianMixture& mix,
                          const RewardSpec* reward, Rng& rng);

MetricRecord eval_sampler(const DataSampler& sampler, const GaussianMixture& mix, const RewardSpec* reward,
                          std::size_t n, Rng& rng);

MetricRecord eval_generator(const OneStepGenerator& gen, const GaussianMixture& mix, const RewardSpec* reward,
                            std::size_t n, Rng& rng);

/// Pooled relative L2 error sqrt(sum ||s - s*||^2 / sum ||s*||^2) of the
/// denoiser's converted score against the analytic mixture score, on
/// `per_time` diffused mixture samples at each listed time.
double score_relative_error(const Denoiser& denoiser, const GaussianMixture& mix, std::span<const double> times,
                            std::size_t per_time, Rng& rng);

/// Probability-flow ODE dx/dt = (x - d(x, t, c)) / t integrated with Euler
/// steps from t_max down to t_min on the rho = 7 time grid, starting from
/// x = t_max * noise.
Tensor euler_reference_sampler(const Denoiser& denoiser, std::span<const int> conditions, std::size_t steps,
                               const DiffusionSchedule& schedule, Rng& rng);

}  // namespace dipp
