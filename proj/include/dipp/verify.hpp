#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dipp/diffusion.hpp"
#include "dipp/mixture.hpp"
#include "dipp/rng.hpp"

namespace dipp {

// Isotropic Gaussian N(mean, variance * I).
struct IsoGaussian {
  std::vector<double> mean;
  double variance = 1.0;
};

// KL(p || q) in closed form.
double gaussian_kl(const IsoGaussian& p, const IsoGaussian& q);

/// Closed-form test bed for the gradient theorems. The generator is
/// x = mu + exp(log_scale) * z with z ~ N(0, I), so p_theta is Gaussian and
/// every objective has an analytic value. Parameters are ordered
/// theta = (mu_1, ..., mu_D, log_scale).
///
/// Reward r(x) = -reward_scale * ||x - reward_target||^2 (reward_scale may be 0).
struct GaussianGeneratorInstance {
  std::vector<double> mu;
  double log_scale = 0.0;
  IsoGaussian reference;
  std::vector<double> reward_target;
  double reward_scale = 0.0;
  double beta = 1.0;

  std::size_t dim() const { return mu.size(); }
  std::size_t param_count() const { return mu.size() + 1; }
  std::vector<double> theta() const;
  GaussianGeneratorInstance with_theta(const std::vector<double>& theta) const;
  IsoGaussian generator() const;
  void validate() const;
};

// E_{x ~ p_theta}[-r(x)] in closed form.
double expected_negative_reward(const GaussianGeneratorInstance& inst);

// E[-r] + beta * KL(p_theta || p_ref).
double kl_objective(const GaussianGeneratorInstance& inst);

/// E[-r] + beta * E_{t ~ pi}[w(t) KL(p_theta,t || p_ref,t)] with the time
/// expectation evaluated by Gauss-Legendre quadrature in log t over the
/// truncation interval plus the point masses the clipping puts on t_min and
/// t_max.
double ikl_objective(const GaussianGeneratorInstance& inst, const TimeSampler& time,
                     const std::function<double(double)>& weight, std::size_t nodes = 64);

// Central differences of `f` at theta.
std::vector<double> finite_difference_gradient(
    const std::function<double(const std::vector<double>&)>& f, const std::vector<double>& theta,
    double h = 1e-4);

struct GradientEstimate {
  std::vector<double> mean;
  std::vector<double> std_error;
};

/// Theorem-1 estimator: mean over samples of
/// [-grad r(x) + beta (grad log p_theta(x) - grad log p_ref(x))] dx/dtheta.
GradientEstimate theorem1_gradient(const GaussianGeneratorInstance& inst, std::size_t samples, Rng& rng);

/// Theorem-2 estimator with t ~ pi, x_t = x0 + t eps:
/// -grad r(x0) dx0/dtheta + beta w(t) (s_theta,t(x_t) - s_ref,t(x_t)) dx_t/dtheta.
GradientEstimate theorem2_gradient(const GaussianGeneratorInstance& inst, const TimeSampler& time,
                                   const std::function<double(double)>& weight, std::size_t samples,
                                   Rng& rng);

/// Monte Carlo mean of d/dtheta log p_theta(x) at fixed x over x ~ p_theta.
/// One extra coordinate is appended for a parameter the density does not
/// depend on; its score is identically zero.
GradientEstimate score_expectation(const GaussianGeneratorInstance& inst, std::size_t samples, Rng& rng);

struct CheckReport {
  std::string name;
  double measured_error = 0.0;
  double tolerance = 0.0;
  bool pass = false;
  std::string detail;
};

/// Relative error per coordinate of the Theorem-1 estimator against central
/// differences of kl_objective.
CheckReport theorem1_check(const GaussianGeneratorInstance& inst, std::size_t samples, std::uint64_t seed,
                           double fd_step = 1e-4, double tolerance = 1e-2);

CheckReport theorem2_check(const GaussianGeneratorInstance& inst, const TimeSampler& time,
                           const std::function<double(double)>& weight, std::size_t samples,
                           std::uint64_t seed, double fd_step = 1e-4, double tolerance = 2e-2);

/// Compares the autograd gradient of the generator pseudo-loss against a
/// gradient assembled from per-sample Jacobians, independently computed score
/// differences and weights, on random small networks. The error is the
/// largest absolute gradient discrepancy over all seeds.
CheckReport pseudo_loss_equivalence_check(std::size_t seeds, std::uint64_t seed, double tolerance = 1e-10);

/// Pointwise identity between the reward-plus-KL gradient integrand with the
/// log-ratio reward and beta * w(t) * (s_theta - s~_ref) with
/// alpha_cfg = 1 + 1/beta, on samples of x_t from `mix`.
CheckReport theorem3_check(const GaussianMixture& mix, const std::vector<double>& betas, std::size_t samples,
                           std::uint64_t seed, double tolerance = 1e-12);

/// Every coordinate of the score-expectation estimate lies within
/// `sigmas` standard errors of zero. The error is the largest |mean| / se.
CheckReport score_expectation_check(const GaussianGeneratorInstance& inst, std::size_t samples,
                                    std::uint64_t seed, double sigmas = 3.0);

// The default instance used by the verify command.
GaussianGeneratorInstance default_verify_instance();

/// All checks at the default tolerances and sample counts.
std::vector<CheckReport> run_all_checks(std::uint64_t seed);

std::string reports_to_json(const std::vector<CheckReport>& reports);

}  // namespace dipp
