#include "dipp/optim.hpp"

#include <cmath>

#include "dipp/errors.hpp"

namespace dipp {

namespace {

void check_adam_config(const AdamConfig& c) {
  if (!(c.lr > 0.0)) throw ConfigError("Adam learning rate must be positive");
  if (!(c.beta1 >= 0.0 && c.beta1 < 1.0) || !(c.beta2 >= 0.0 && c.beta2 < 1.0)) {
    throw ConfigError("Adam betas must lie in [0, 1)");
  }
  if (!(c.epsilon > 0.0)) throw ConfigError("Adam epsilon must be positive");
}

void check_decay(double decay) {
  if (!(decay >= 0.0 && decay <= 1.0)) {
    throw ConfigError("EMA decay " + std::to_string(decay) + " outside [0, 1]");
  }
}

}  // namespace

AdamState::AdamState(std::size_t param_count, AdamConfig config)
    : config_(config), m_(param_count, 0.0), v_(param_count, 0.0) {
  check_adam_config(config_);
}

void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads,
               std::span<const ParamBlock> blocks) {
  if (params.size() != state.m_.size() || grads.size() != state.m_.size()) {
    throw DimensionError("adam_step: state holds " + std::to_string(state.m_.size()) +
                         " entries, got " + std::to_string(params.size()) + " params and " +
                         std::to_string(grads.size()) + " grads");
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (std::isfinite(grads[i])) continue;
    std::string where = "index " + std::to_string(i);
    for (const auto& b : blocks) {
      if (i >= b.offset && i < b.offset + b.size) {
        where = "block '" + b.name + "'";
        break;
      }
    }
    throw DivergenceError("non-finite gradient in parameter " + where);
  }

  const AdamConfig& c = state.config_;
  state.step_ += 1;
  const double t = static_cast<double>(state.step_);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m_[i] = c.beta1 * state.m_[i] + (1.0 - c.beta1) * g;
    state.v_[i] = c.beta2 * state.v_[i] + (1.0 - c.beta2) * g * g;
    const double m_hat = state.m_[i] / bc1;
    const double v_hat = state.v_[i] / bc2;
    params[i] -= c.lr * m_hat / (std::sqrt(v_hat) + c.epsilon);
  }
}

EmaState::EmaState(double decay, std::span<const double> initial)
    : decay_(decay), shadow_(initial.begin(), initial.end()) {
  check_decay(decay_);
}

void ema_update(EmaState& state, std::span<const double> params) {
  check_decay(state.decay_);
  if (params.size() != state.shadow_.size()) {
    throw DimensionError("ema_update: shadow holds " + std::to_string(state.shadow_.size()) +
                         " entries, got " + std::to_string(params.size()));
  }
  const double d = state.decay_;
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.shadow_[i] = d * state.shadow_[i] + (1.0 - d) * params[i];
  }
}

}  // namespace dipp
