#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "dipp/denoiser.hpp"
#include "dipp/generator.hpp"
#include "dipp/optim.hpp"
#include "dipp/rewards.hpp"

namespace dipp {

/// Per-sample weight w(t) on the score-difference term of the generator loss.
///
///   unit      w = 1 on s_phi - s_ref (score space)
///   denoiser  w = t^2, i.e. unit weight on d_phi - d_ref (denoiser space)
///   w_gen     w = t^2 / ||d_phi - d_ref||, the normalized denoiser difference
enum class GeneratorWeighting { unit, denoiser, w_gen };

const char* weighting_name(GeneratorWeighting w);
GeneratorWeighting parse_weighting(const std::string& name);

struct AlignConfig {
  double alpha_rew = 0.0;
  double alpha_cfg = 1.0;
  std::size_t k_ta = 1;
  TimeSampler time;
  DiffusionSchedule schedule;
  GeneratorWeighting weighting = GeneratorWeighting::w_gen;
  double w_gen_floor = 1e-6;
  std::size_t batch = 256;
  AdamConfig generator_optimizer{1e-4, 0.0, 0.999, 1e-8};
  AdamConfig ta_optimizer{1e-4, 0.0, 0.999, 1e-8};
  std::size_t steps = 1000;
  double ema_decay = 0.95;
  double final_lr_scale = 1.0;  // cosine decay of both learning rates to lr * final_lr_scale
  std::uint64_t seed = 0;
  double max_pseudo_loss = 1e6;

  void validate() const;
};

struct AlignMetrics {
  std::size_t step = 0;
  double ta_loss = 0.0;
  double pseudo_loss = 0.0;
  double mean_reward = std::numeric_limits<double>::quiet_NaN();
  double score_diff_norm = 0.0;
};

struct AlignState {
  OneStepGenerator generator;
  EmaState ema;
  AdamState generator_optimizer;
  DenoiserNet ta;
  AdamState ta_optimizer;
  std::size_t step = 0;
  std::vector<AlignMetrics> trace;
  Rng rng;
};

AlignState make_align_state(const OneStepGenerator& base, const DenoiserNet& ta_init,
                            const AlignConfig& config);

// s_uncond + alpha * (s_cond - s_uncond)
Tensor cfg_combine(const Tensor& s_uncond, const Tensor& s_cond, double alpha_cfg);

// 1 / max(||d_phi - d_ref||, floor)
double w_gen_weighting(std::span<const double> d_phi, std::span<const double> d_ref,
                       double floor = 1e-6);

/// K_TA denoising-regression steps of the TA model on detached generator
/// samples. Returns the mean TA loss of the phase.
double ta_update(AlignState& state, const AlignConfig& config);

struct PseudoLossBatch {
  std::vector<int> conditions;
  Tensor z;
  std::vector<double> t;
  Tensor noise;
};

PseudoLossBatch sample_pseudo_loss_batch(const OneStepGenerator& generator, std::size_t batch, Rng& rng,
                                         const TimeSampler& time);

struct PseudoLossResult {
  double loss = 0.0;
  std::vector<double> grad;  // d loss / d theta
  double mean_reward = std::numeric_limits<double>::quiet_NaN();
  double score_diff_norm = 0.0;
  Tensor x0;
  Tensor xt;
  Tensor y;                     // detached s_phi - s~_ref at x_t
  std::vector<double> weights;  // w(t) per sample
};

/// Batch mean of -alpha_rew * r(x0, c) + w(t) * y_t^T x_t where
/// x0 = g_theta(z, c), x_t = x0 + t * noise and y_t is treated as a
/// constant. The returned gradient is the exact theta-gradient of that scalar.
/// `reward` may be null (no reward term and no reward metric).
PseudoLossResult generator_pseudo_loss(const OneStepGenerator& generator, const DenoiserNet& ta,
                                       const Denoiser& reference, const RewardSpec* reward,
                                       const AlignConfig& config, const PseudoLossBatch& batch);

// One generator step: pseudo-loss, Adam, EMA, divergence guard.
AlignMetrics generator_update(AlignState& state, const Denoiser& reference, const RewardSpec* reward,
                              const AlignConfig& config);

struct AlignResult {
  OneStepGenerator generator;  // EMA parameters
  OneStepGenerator last;       // raw parameters at the final step
  DenoiserNet ta;
  std::vector<AlignMetrics> trace;
};

using StepCallback = std::function<void(const AlignMetrics&)>;

/// Alternating TA / generator optimization starting from `base`, with the TA
/// initialized from `ta_init`. The reference is only read.
AlignResult dipp_align(const OneStepGenerator& base, const Denoiser& reference,
                       const DenoiserNet& ta_init, const RewardSpec* reward, const AlignConfig& config,
                       const StepCallback& on_step = {});

/// Reward-free distillation of `reference` into a generator initialized from
/// it. Requires alpha_rew == 0.
AlignResult diff_instruct_pretrain(const DenoiserNet& reference, const GaussianMixture& mix,
                                   const AlignConfig& config, double sigma_init = kDefaultSigmaInit,
                                   const StepCallback& on_step = {});

}  // namespace dipp
