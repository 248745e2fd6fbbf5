#include "dipp/evaluation.hpp"

#include <algorithm>
#include <cmath>

#include "dipp/errors.hpp"

namespace dipp {

namespace {

double distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

double mean_cross(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.rows(); ++j) s += distance(a.row(i), b.row(j));
  }
  return s / (static_cast<double>(a.rows()) * static_cast<double>(b.rows()));
}

double mean_within(const Tensor& a) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = i + 1; j < a.rows(); ++j) s += distance(a.row(i), a.row(j));
  }
  const double n = static_cast<double>(a.rows());
  return 2.0 * s / (n * (n - 1.0));
}

}  // namespace

double energy_distance(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.cols()) {
    throw DimensionError("energy_distance: samples must be matrices of equal width");
  }
  if (a.rows() < 2 || b.rows() < 2) throw DimensionError("energy_distance: need at least two samples per side");
  return 2.0 * mean_cross(a, b) - mean_within(a) - mean_within(b);
}

double mean_cfg_log_ratio(const GaussianMixture& mix, const Tensor& samples, std::span<const int> conditions) {
  if (samples.rows() != conditions.size()) throw DimensionError("mean_cfg_log_ratio: batch size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < samples.rows(); ++i) {
    s += mix.log_density(samples.row(i), 0.0, conditions[i]) - mix.log_density(samples.row(i), 0.0, kNullCondition);
  }
  return s / static_cast<double>(samples.rows());
}

std::vector<int> balanced_conditions(std::size_t n, std::size_t num_conditions) {
  if (num_conditions == 0) throw ConfigError("balanced_conditions: no conditions");
  std::vector<int> c(n);
  for (std::size_t i = 0; i < n; ++i) c[i] = static_cast<int>(i % num_conditions);
  return c;
}

MetricRecord eval_samples(const Tensor& samples, std::span<const int> conditions, const GaussianMixture& mix,
                          const RewardSpec* reward, Rng& rng) {
  if (samples.rank() != 2 || samples.cols() != mix.dim() || samples.rows() != conditions.size()) {
    throw DimensionError("eval_samples: got " + shape_string(samples.shape()) + " for " +
                         std::to_string(conditions.size()) + " conditions");
  }
  for (int c : conditions) mix.check_condition(c);
  MetricRecord rec;
  const double n = static_cast<double>(samples.rows());
  if (reward) {
    const auto r = reward_eval(*reward, samples, conditions);
    double total = 0.0;
    for (double v : r) total += v;
    rec.values["mean_reward"] = total / n;
  }
  rec.values["energy_distance"] = energy_distance(samples, mix.sample(conditions, rng));

  double worst = 0.0;
  for (std::size_t c = 0; c < mix.num_conditions(); ++c) {
    std::vector<double> mean(mix.dim(), 0.0);
    std::size_t count = 0;
    for (std::size_t i = 0; i < samples.rows(); ++i) {
      if (conditions[i] != static_cast<int>(c)) continue;
      for (std::size_t j = 0; j < mix.dim(); ++j) mean[j] += samples(i, j);
      ++count;
    }
    if (count == 0) continue;
    for (double& m : mean) m /= static_cast<double>(count);
    const double err = distance(mean, mix.mean(static_cast<int>(c)));
    rec.values["mean_error_c" + std::to_string(c)] = err;
    worst = std::max(worst, err);
  }
  rec.values["mean_error"] = worst;
  rec.values["cfg_log_ratio"] = mean_cfg_log_ratio(mix, samples, conditions);
  return rec;
}

MetricRecord eval_sampler(const DataSampler& sampler, const GaussianMixture& mix, const RewardSpec* reward,
                          std::size_t n, Rng& rng) {
  if (n < 100) throw ConfigError("evaluation needs at least 100 samples");
  const auto conditions = balanced_conditions(n, mix.num_conditions());
  const Tensor x = sampler(conditions, rng);
  return eval_samples(x, conditions, mix, reward, rng);
}

MetricRecord eval_generator(const OneStepGenerator& gen, const GaussianMixture& mix, const RewardSpec* reward,
                            std::size_t n, Rng& rng) {
  if (gen.dim() != mix.dim() || gen.num_conditions() != mix.num_conditions()) {
    throw ConfigError("generator and mixture disagree on dimension or condition count");
  }
  return eval_sampler([&](std::span<const int> c, Rng& r) { return gen.generate(gen.sample_latent(c.size(), r), c); },
                      mix, reward, n, rng);
}

Tensor euler_reference_sampler(const Denoiser& denoiser, std::span<const int> conditions, std::size_t steps,
                               const DiffusionSchedule& schedule, Rng& rng) {
  if (steps < 2) throw ConfigError("euler_reference_sampler needs at least 2 steps");
  schedule.validate();
  constexpr double rho = 7.0;
  const double a = std::pow(schedule.t_max, 1.0 / rho);
  const double b = std::pow(schedule.t_min, 1.0 / rho);
  std::vector<double> grid(steps + 1);
  for (std::size_t i = 0; i <= steps; ++i) {
    grid[i] = std::pow(a + static_cast<double>(i) / static_cast<double>(steps) * (b - a), rho);
  }
  grid.front() = schedule.t_max;
  grid.back() = schedule.t_min;

  const std::size_t n = conditions.size();
  Tensor x({n, denoiser.dim()});
  for (double& v : x.values()) v = schedule.t_max * rng.normal();
  std::vector<double> t(n);
  for (std::size_t k = 0; k < steps; ++k) {
    std::fill(t.begin(), t.end(), grid[k]);
    const Tensor d = denoiser.denoise(x, t, conditions);
    const double dt = grid[k + 1] - grid[k];
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += dt * (x[i] - d[i]) / grid[k];
  }
  return x;
}

double score_relative_error(const Denoiser& denoiser, const GaussianMixture& mix, std::span<const double> times,
                            std::size_t per_time, Rng& rng) {
  if (per_time == 0) throw ConfigError("score_relative_error needs samples");
  const int conditions = static_cast<int>(mix.num_conditions());
  double num = 0.0, den = 0.0;
  for (double t : times) {
    std::vector<int> c(per_time);
    for (auto& k : c) k = rng.uniform_int(conditions);
    Tensor xt = mix.sample(c, rng);
    for (double& v : xt.values()) v += t * rng.normal();
    const std::vector<double> ts(per_time, t);
    const Tensor s = score_from_denoiser(denoiser.denoise(xt, ts, c), xt, ts);
    const Tensor exact = analytic_score(mix, xt, ts, c);
    for (std::size_t i = 0; i < s.size(); ++i) {
      num += (s[i] - exact[i]) * (s[i] - exact[i]);
      den += exact[i] * exact[i];
    }
  }
  return std::sqrt(num / den);
}

}  // namespace dipp
