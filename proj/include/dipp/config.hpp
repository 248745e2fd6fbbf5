#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "dipp/align.hpp"
#include "dipp/denoiser.hpp"
#include "dipp/mixture.hpp"
#include "dipp/rewards.hpp"

namespace dipp {

struct RunSettings {
  std::uint64_t seed = 0;
  std::string out = "runs/default";
  bool operator==(const RunSettings&) const = default;
};

// Ring benchmark: `components` Gaussians per condition on a circle.
struct MixtureSettings {
  std::size_t dim = 2;
  std::size_t conditions = 3;
  std::size_t components = 3;
  double radius = 4.0;
  double sigma = 0.5;
  bool operator==(const MixtureSettings&) const = default;
};

struct ScheduleSettings {
  double t_min = kDefaultTMin;
  double t_max = kDefaultTMax;
  double p_mean = -2.0;
  double p_std = 2.0;
  double sigma_data = kDefaultSigmaData;
  double sigma_init = kDefaultSigmaInit;
  bool operator==(const ScheduleSettings&) const = default;
};

struct NetworkSettings {
  std::vector<std::size_t> hidden = {64, 64, 64};
  Activation activation = Activation::tanh;
  bool operator==(const NetworkSettings&) const = default;
};

struct PretrainSettings {
  std::size_t steps = 20000;
  std::size_t batch = 256;
  double lr = 2e-3;
  double final_lr_scale = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double condition_drop = 0.1;
  bool operator==(const PretrainSettings&) const = default;
};

// Shared by the distill and align stages.
struct StageSettings {
  std::size_t steps = 20000;
  std::size_t batch = 256;
  double lr_generator = 5e-4;
  double lr_ta = 5e-4;
  double beta1 = 0.0;
  double beta2 = 0.999;
  std::size_t k_ta = 1;
  double alpha_rew = 0.0;
  double alpha_cfg = 1.0;
  double ema_decay = 0.95;
  double final_lr_scale = 1.0;
  GeneratorWeighting weighting = GeneratorWeighting::w_gen;
  double w_gen_floor = 1e-6;
  bool operator==(const StageSettings&) const = default;
};

// r(x, c) = -scale * ||x - m_c||^2 with m_c the mean of component
// `target_component` of condition c.
struct RewardSettings {
  std::string kind = "quadratic";
  std::size_t target_component = 0;
  double scale = 0.5;
  bool operator==(const RewardSettings&) const = default;
};

struct EvalSettings {
  std::size_t samples = 10000;
  bool operator==(const EvalSettings&) const = default;
};

struct ExperimentConfig {
  RunSettings run;
  MixtureSettings mixture;
  ScheduleSettings schedule;
  NetworkSettings network;
  PretrainSettings pretrain;
  StageSettings distill = {.ema_decay = 0.999, .final_lr_scale = 0.1};
  StageSettings align = {.steps = 3000, .alpha_rew = 1.0};
  RewardSettings reward;
  EvalSettings eval;

  bool operator==(const ExperimentConfig&) const = default;
  void validate() const;
};

ExperimentConfig default_config();

/// Parses the sectioned key = value format. `source` names the input in
/// error messages. Unknown sections or keys, duplicates and malformed values
/// raise ConfigError with the line number.
ExperimentConfig parse_config(const std::string& text, const std::string& source = "<config>");
ExperimentConfig load_config(const std::string& path);
std::string serialize_config(const ExperimentConfig& config);
void save_config(const ExperimentConfig& config, const std::string& path);

/// Hash of everything that defines a trained model (mixture, schedule,
/// network). Checkpoints record it; loading under a different value fails.
std::uint64_t model_hash(const ExperimentConfig& config);

GaussianMixture make_mixture(const ExperimentConfig& config);
DenoiserArch make_arch(const ExperimentConfig& config);
TimeSampler make_time_sampler(const ExperimentConfig& config);
DiffusionSchedule make_schedule(const ExperimentConfig& config);
RewardSpec make_reward(const ExperimentConfig& config, const GaussianMixture& mix);
AlignConfig make_align_config(const ExperimentConfig& config, const StageSettings& stage, std::uint64_t seed);

}  // namespace dipp
