#pragma once

#include <span>
#include <vector>

#include "dipp/rng.hpp"
#include "dipp/tensor.hpp"

namespace dipp {

inline constexpr double kDefaultTMin = 0.01;
inline constexpr double kDefaultTMax = 156.6155;
inline constexpr double kDefaultSigmaData = 0.5;

// Variance-exploding process x_t = x_0 + t * eps.
struct DiffusionSchedule {
  double t_min = kDefaultTMin;
  double t_max = kDefaultTMax;

  void validate() const;
  bool contains(double t) const { return t >= t_min && t <= t_max; }
};

// t = exp(s), s ~ N(p_mean, p_std^2), clipped to [t_min, t_max].
struct TimeSampler {
  double p_mean = -2.0;
  double p_std = 2.0;
  double t_min = kDefaultTMin;
  double t_max = kDefaultTMax;

  void validate() const;
};

double sample_time(const TimeSampler& sampler, Rng& rng);
std::vector<double> sample_times(const TimeSampler& sampler, std::size_t n, Rng& rng);

// x_t = x0 + t * noise, row i perturbed with t[i]. Every t must lie in the
// schedule range.
Tensor forward_perturb(const DiffusionSchedule& schedule, const Tensor& x0,
                       std::span<const double> t, const Tensor& noise);

// s = (d - x_t) / t^2, guarded against t < t_min.
Tensor score_from_denoiser(const Tensor& d_out, const Tensor& x_t, std::span<const double> t,
                           double t_min = kDefaultTMin);

// (t^2 + sigma_data^2) / (t * sigma_data)^2
double lambda_edm(double t, double sigma_data = kDefaultSigmaData);

// Denoiser preconditioning: d(x, t) = c_skip x + c_out F(c_in x, c_noise).
struct Preconditioning {
  double c_skip;
  double c_out;
  double c_in;
  double c_noise;
};
Preconditioning edm_preconditioning(double t, double sigma_data);

}  // namespace dipp
