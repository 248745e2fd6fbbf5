#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "dipp/mlp.hpp"

namespace dipp {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class AdamState {
 public:
  AdamState() = default;
  AdamState(std::size_t param_count, AdamConfig config);

  const AdamConfig& config() const { return config_; }
  AdamConfig& config() { return config_; }
  std::uint64_t step() const { return step_; }
  std::span<const double> first_moment() const { return m_; }
  std::span<const double> second_moment() const { return v_; }
  std::size_t size() const { return m_.size(); }

 private:
  friend void adam_step(AdamState&, std::span<double>, std::span<const double>,
                        std::span<const ParamBlock>);
  AdamConfig config_;
  std::vector<double> m_;
  std::vector<double> v_;
  std::uint64_t step_ = 0;
};

/// Bias-corrected Adam update in place. A non-finite gradient raises
/// DivergenceError naming the enclosing parameter block, before anything is
/// modified.
void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads,
               std::span<const ParamBlock> blocks = {});

class EmaState {
 public:
  EmaState() = default;
  EmaState(double decay, std::span<const double> initial);

  double decay() const { return decay_; }
  std::span<const double> shadow() const { return shadow_; }

 private:
  friend void ema_update(EmaState&, std::span<const double>);
  double decay_ = 0.0;
  std::vector<double> shadow_;
};

// shadow <- decay * shadow + (1 - decay) * params
void ema_update(EmaState& state, std::span<const double> params);

}  // namespace dipp
