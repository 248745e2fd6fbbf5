#include "dipp/diffusion.hpp"

#include <algorithm>
#include <cmath>

#include "dipp/errors.hpp"

namespace dipp {

void DiffusionSchedule::validate() const {
  if (!(t_min > 0.0 && t_min < t_max)) {
    throw ConfigError("diffusion schedule needs 0 < t_min < t_max");
  }
}

void TimeSampler::validate() const {
  if (!(p_std >= 0.0)) throw ConfigError("time sampler p_std must be non-negative");
  if (!(t_min > 0.0 && t_min < t_max)) throw ConfigError("time sampler needs 0 < t_min < t_max");
}

double sample_time(const TimeSampler& sampler, Rng& rng) {
  const double s = sampler.p_mean + sampler.p_std * rng.normal();
  return std::clamp(std::exp(s), sampler.t_min, sampler.t_max);
}

std::vector<double> sample_times(const TimeSampler& sampler, std::size_t n, Rng& rng) {
  std::vector<double> out(n);
  for (auto& t : out) t = sample_time(sampler, rng);
  return out;
}

Tensor forward_perturb(const DiffusionSchedule& schedule, const Tensor& x0,
                       std::span<const double> t, const Tensor& noise) {
  require_same_shape(x0, noise, "forward_perturb");
  if (t.size() != x0.rows()) {
    throw DimensionError("forward_perturb: " + std::to_string(t.size()) + " times for " +
                         std::to_string(x0.rows()) + " samples");
  }
  Tensor out(x0.shape());
  for (std::size_t n = 0; n < x0.rows(); ++n) {
    if (!schedule.contains(t[n])) {
      throw ScheduleError("time " + std::to_string(t[n]) + " outside schedule range [" +
                          std::to_string(schedule.t_min) + ", " + std::to_string(schedule.t_max) +
                          "]");
    }
    for (std::size_t i = 0; i < x0.cols(); ++i) out(n, i) = x0(n, i) + t[n] * noise(n, i);
  }
  return out;
}

Tensor score_from_denoiser(const Tensor& d_out, const Tensor& x_t, std::span<const double> t,
                           double t_min) {
  require_same_shape(d_out, x_t, "score_from_denoiser");
  if (t.size() != x_t.rows()) throw DimensionError("score_from_denoiser: time count mismatch");
  Tensor out(x_t.shape());
  for (std::size_t n = 0; n < x_t.rows(); ++n) {
    if (!(t[n] >= t_min)) {
      throw ScheduleError("score_from_denoiser: t=" + std::to_string(t[n]) + " below t_min=" +
                          std::to_string(t_min));
    }
    const double inv = 1.0 / (t[n] * t[n]);
    for (std::size_t i = 0; i < x_t.cols(); ++i) out(n, i) = (d_out(n, i) - x_t(n, i)) * inv;
  }
  return out;
}

double lambda_edm(double t, double sigma_data) {
  if (!(t > 0.0)) throw DomainError("lambda_edm requires t > 0, got " + std::to_string(t));
  const double ts = t * sigma_data;
  return (t * t + sigma_data * sigma_data) / (ts * ts);
}

Preconditioning edm_preconditioning(double t, double sigma_data) {
  const double sd2 = sigma_data * sigma_data;
  const double norm = std::sqrt(t * t + sd2);
  return {sd2 / (t * t + sd2), t * sigma_data / norm, 1.0 / norm, 0.25 * std::log(t)};
}

}  // namespace dipp
