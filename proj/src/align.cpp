#include "dipp/align.hpp"

#include <cmath>
#include <numbers>

#include "dipp/errors.hpp"

namespace dipp {

const char* weighting_name(GeneratorWeighting w) {
  switch (w) {
    case GeneratorWeighting::unit:
      return "unit";
    case GeneratorWeighting::denoiser:
      return "denoiser";
    case GeneratorWeighting::w_gen:
      return "w_gen";
  }
  return "?";
}

GeneratorWeighting parse_weighting(const std::string& name) {
  if (name == "unit" || name == "constant") return GeneratorWeighting::unit;
  if (name == "denoiser") return GeneratorWeighting::denoiser;
  if (name == "w_gen") return GeneratorWeighting::w_gen;
  throw ConfigError("unknown generator weighting '" + name + "' (expected unit, denoiser or w_gen)");
}

void AlignConfig::validate() const {
  if (!(alpha_rew >= 0.0)) throw ConfigError("alpha_rew must be >= 0");
  if (!(alpha_cfg >= 0.0)) throw ConfigError("alpha_cfg must be >= 0");
  if (k_ta == 0) throw ConfigError("K_TA must be a positive integer");
  if (batch == 0) throw ConfigError("batch size must be positive");
  if (!(w_gen_floor > 0.0)) throw ConfigError("w_gen floor must be positive");
  if (!(ema_decay >= 0.0 && ema_decay <= 1.0)) throw ConfigError("EMA decay must lie in [0, 1]");
  if (!(final_lr_scale >= 0.0)) throw ConfigError("final lr scale must be >= 0");
  time.validate();
  schedule.validate();
  if (time.t_min < schedule.t_min || time.t_max > schedule.t_max) {
    throw ConfigError("time sampler range exceeds the diffusion schedule");
  }
}

AlignState make_align_state(const OneStepGenerator& base, const DenoiserNet& ta_init,
                            const AlignConfig& config) {
  config.validate();
  if (!(base.net().arch() == ta_init.arch())) {
    throw ConfigError("generator (" + base.net().arch().describe() + ") and TA (" +
                      ta_init.arch().describe() + ") architectures differ");
  }
  AlignState s;
  s.generator = base;
  s.ema = EmaState(config.ema_decay, base.params());
  s.generator_optimizer = AdamState(base.net().net().param_count(), config.generator_optimizer);
  s.ta = ta_init;
  s.ta_optimizer = AdamState(ta_init.net().param_count(), config.ta_optimizer);
  s.rng = Rng(config.seed);
  return s;
}

Tensor cfg_combine(const Tensor& s_uncond, const Tensor& s_cond, double alpha_cfg) {
  require_same_shape(s_uncond, s_cond, "cfg_combine");
  Tensor out(s_cond.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = s_uncond[i] + alpha_cfg * (s_cond[i] - s_uncond[i]);
  }
  return out;
}

double w_gen_weighting(std::span<const double> d_phi, std::span<const double> d_ref, double floor) {
  if (d_phi.size() != d_ref.size()) throw DimensionError("w_gen_weighting: size mismatch");
  double sq = 0.0;
  for (std::size_t i = 0; i < d_phi.size(); ++i) sq += (d_phi[i] - d_ref[i]) * (d_phi[i] - d_ref[i]);
  return 1.0 / std::max(std::sqrt(sq), floor);
}

double ta_update(AlignState& state, const AlignConfig& config) {
  if (config.k_ta == 0) throw ConfigError("K_TA must be a positive integer");
  const auto blocks = state.ta.net().blocks();
  const int conditions = static_cast<int>(state.generator.num_conditions());
  double total = 0.0;
  std::vector<double> grad;
  for (std::size_t k = 0; k < config.k_ta; ++k) {
    DsmBatch batch;
    batch.conditions.resize(config.batch);
    for (auto& c : batch.conditions) c = state.rng.uniform_int(conditions);
    const Tensor z = state.generator.sample_latent(config.batch, state.rng);
    batch.x0 = state.generator.generate(z, batch.conditions);
    batch.t = sample_times(config.time, config.batch, state.rng);
    batch.noise = Tensor(batch.x0.shape());
    for (double& v : batch.noise.values()) v = state.rng.normal();
    const double loss = dsm_loss(state.ta, batch, &grad);
    if (!std::isfinite(loss)) {
      throw DivergenceError("TA loss non-finite at generator step " + std::to_string(state.step) +
                            ", TA round " + std::to_string(k));
    }
    adam_step(state.ta_optimizer, state.ta.params(), grad, blocks);
    total += loss;
  }
  return total / static_cast<double>(config.k_ta);
}

PseudoLossBatch sample_pseudo_loss_batch(const OneStepGenerator& generator, std::size_t batch, Rng& rng,
                                         const TimeSampler& time) {
  PseudoLossBatch b;
  b.conditions.resize(batch);
  for (auto& c : b.conditions) c = rng.uniform_int(static_cast<int>(generator.num_conditions()));
  b.z = generator.sample_latent(batch, rng);
  b.t = sample_times(time, batch, rng);
  b.noise = Tensor({batch, generator.dim()});
  for (double& v : b.noise.values()) v = rng.normal();
  return b;
}

PseudoLossResult generator_pseudo_loss(const OneStepGenerator& generator, const DenoiserNet& ta,
                                       const Denoiser& reference, const RewardSpec* reward,
                                       const AlignConfig& config, const PseudoLossBatch& batch) {
  if (reward && reward_needs_time(*reward)) {
    throw ConfigError("alignment rewards must be time-free; guidance enters through alpha_cfg");
  }
  const std::size_t n = batch.z.rows();
  const std::size_t dim = generator.dim();
  PseudoLossResult res;

  DenoiserTape tape;
  res.x0 = generator.generate(batch.z, batch.conditions, tape);
  res.xt = forward_perturb(config.schedule, res.x0, batch.t, batch.noise);

  // Everything below up to the cotangent is detached from theta.
  const double t_min = config.schedule.t_min;
  const Tensor s_ta = score_from_denoiser(ta.denoise(res.xt, batch.t, batch.conditions), res.xt, batch.t, t_min);
  const Tensor s_cond =
      score_from_denoiser(reference.denoise(res.xt, batch.t, batch.conditions), res.xt, batch.t, t_min);
  Tensor s_guided = s_cond;
  if (config.alpha_cfg != 1.0) {
    const std::vector<int> null_conditions(n, kNullCondition);
    const Tensor s_uncond =
        score_from_denoiser(reference.denoise(res.xt, batch.t, null_conditions), res.xt, batch.t, t_min);
    s_guided = cfg_combine(s_uncond, s_cond, config.alpha_cfg);
  }

  res.y = Tensor(res.xt.shape());
  res.weights.resize(n);
  double diff_norm = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t2 = batch.t[i] * batch.t[i];
    double sq = 0.0;
    for (std::size_t j = 0; j < dim; ++j) {
      res.y(i, j) = s_ta(i, j) - s_guided(i, j);
      sq += res.y(i, j) * res.y(i, j);
    }
    diff_norm += std::sqrt(sq);
    switch (config.weighting) {
      case GeneratorWeighting::unit:
        res.weights[i] = 1.0;
        break;
      case GeneratorWeighting::denoiser:
        res.weights[i] = t2;
        break;
      case GeneratorWeighting::w_gen:
        // ||d_phi - d~_ref|| = t^2 ||y||
        res.weights[i] = t2 / std::max(t2 * std::sqrt(sq), config.w_gen_floor);
        break;
    }
  }
  res.score_diff_norm = diff_norm / static_cast<double>(n);

  const double inv_n = 1.0 / static_cast<double>(n);
  Tensor cot(res.x0.shape());
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double dot = 0.0;
    for (std::size_t j = 0; j < dim; ++j) {
      dot += res.y(i, j) * res.xt(i, j);
      cot(i, j) = res.weights[i] * res.y(i, j) * inv_n;
    }
    loss += res.weights[i] * dot;
  }

  if (reward) {
    const auto r = reward_eval(*reward, res.x0, batch.conditions);
    double mean = 0.0;
    for (double v : r) mean += v;
    res.mean_reward = mean * inv_n;
    if (config.alpha_rew != 0.0) {
      const Tensor g = reward_grad(*reward, res.x0, batch.conditions);
      for (std::size_t i = 0; i < n; ++i) {
        loss -= config.alpha_rew * r[i];
        for (std::size_t j = 0; j < dim; ++j) cot(i, j) -= config.alpha_rew * g(i, j) * inv_n;
      }
    }
  }
  res.loss = loss * inv_n;
  // x_t = x0 + t * noise, so d x_t / d theta = d x0 / d theta.
  res.grad = generator.backward(tape, cot);
  return res;
}

AlignMetrics generator_update(AlignState& state, const Denoiser& reference, const RewardSpec* reward,
                              const AlignConfig& config) {
  const PseudoLossBatch batch = sample_pseudo_loss_batch(state.generator, config.batch, state.rng, config.time);
  PseudoLossResult res = generator_pseudo_loss(state.generator, state.ta, reference, reward, config, batch);
  if (!std::isfinite(res.loss) || std::abs(res.loss) > config.max_pseudo_loss) {
    throw DivergenceError("generator pseudo-loss " + std::to_string(res.loss) + " at step " +
                          std::to_string(state.step) + " exceeds the divergence guard");
  }
  const auto blocks = state.generator.net().net().blocks();
  adam_step(state.generator_optimizer, state.generator.params(), res.grad, blocks);
  for (double p : state.generator.params()) {
    if (!std::isfinite(p)) {
      throw DivergenceError("generator parameters non-finite after step " + std::to_string(state.step));
    }
  }
  ema_update(state.ema, state.generator.params());
  AlignMetrics m;
  m.step = state.step;
  m.pseudo_loss = res.loss;
  m.mean_reward = res.mean_reward;
  m.score_diff_norm = res.score_diff_norm;
  return m;
}

AlignResult dipp_align(const OneStepGenerator& base, const Denoiser& reference, const DenoiserNet& ta_init,
                       const RewardSpec* reward, const AlignConfig& config, const StepCallback& on_step) {
  AlignState state = make_align_state(base, ta_init, config);
  if (reference.dim() != base.dim() || reference.num_conditions() != base.num_conditions()) {
    throw ConfigError("reference and generator disagree on dimension or condition count");
  }
  const double gen_lr = config.generator_optimizer.lr;
  const double ta_lr = config.ta_optimizer.lr;
  for (std::size_t step = 0; step < config.steps; ++step) {
    state.step = step;
    if (config.final_lr_scale != 1.0) {
      const double progress = static_cast<double>(step) / static_cast<double>(config.steps);
      const double cosine = 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
      const double scale = config.final_lr_scale + (1.0 - config.final_lr_scale) * cosine;
      state.generator_optimizer.config().lr = gen_lr * scale;
      state.ta_optimizer.config().lr = ta_lr * scale;
    }
    const double ta_loss = ta_update(state, config);
    AlignMetrics m = generator_update(state, reference, reward, config);
    m.ta_loss = ta_loss;
    state.trace.push_back(m);
    if (on_step) on_step(m);
  }
  AlignResult out;
  out.last = state.generator;
  out.generator = state.generator;
  std::copy(state.ema.shadow().begin(), state.ema.shadow().end(), out.generator.params().begin());
  out.ta = std::move(state.ta);
  out.trace = std::move(state.trace);
  return out;
}

AlignResult diff_instruct_pretrain(const DenoiserNet& reference, const GaussianMixture& mix,
                                   const AlignConfig& config, double sigma_init, const StepCallback& on_step) {
  if (config.alpha_rew != 0.0) throw ConfigError("Diff-Instruct pre-training requires alpha_rew = 0");
  if (mix.dim() != reference.dim() || mix.num_conditions() != reference.num_conditions()) {
    throw ConfigError("mixture and reference disagree on dimension or condition count");
  }
  const OneStepGenerator base = init_from_reference(reference, sigma_init);
  return dipp_align(base, reference, reference, nullptr, config, on_step);
}

}  // namespace dipp
