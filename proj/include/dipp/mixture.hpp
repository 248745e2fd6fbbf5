#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "dipp/rng.hpp"
#include "dipp/tensor.hpp"

namespace dipp {

// Condition index that selects the unconditional (marginal) distribution.
inline constexpr int kNullCondition = -1;

struct MixtureComponent {
  std::vector<double> mean;
  double variance = 1.0;  // isotropic
  double weight = 1.0;
};

/// Conditional isotropic Gaussian mixture q(x | c).
///
/// Diffusing to time t adds t^2 to every component variance, so densities
/// and scores at any noise level are closed-form. The unconditional
/// distribution mixes the conditions with a uniform prior.
class GaussianMixture {
 public:
  GaussianMixture() = default;
  // Weights are normalized per condition; they must be positive.
  GaussianMixture(std::size_t dim, std::vector<std::vector<MixtureComponent>> per_condition);

  /// `components` Gaussians per condition with means evenly spaced on a circle
  /// of the given radius (first two coordinates). Condition c owns the
  /// contiguous arc of angles starting at index c * components.
  static GaussianMixture ring(std::size_t dim, std::size_t conditions, std::size_t components,
                              double radius, double sigma);

  std::size_t dim() const { return dim_; }
  std::size_t num_conditions() const { return components_.size(); }
  const std::vector<MixtureComponent>& components(std::size_t condition) const {
    return components_.at(condition);
  }

  // log q_t(x | c); c == kNullCondition gives the marginal.
  double log_density(std::span<const double> x, double t, int condition) const;
  // grad_x log q_t(x | c), written to `out` (size dim).
  void score(std::span<const double> x, double t, int condition, std::span<double> out) const;

  std::vector<double> mean(int condition) const;

  // One sample per entry of `conditions`; null draws a condition uniformly.
  Tensor sample(std::span<const int> conditions, Rng& rng) const;

  void check_condition(int condition) const;

 private:
  struct Term {
    const MixtureComponent* component;
    double log_weight;
  };
  std::vector<Term> terms(int condition) const;

  std::size_t dim_ = 0;
  std::vector<std::vector<MixtureComponent>> components_;
};

std::vector<double> analytic_score(const GaussianMixture& mix, std::span<const double> x, double t,
                                   int condition);
// Batched form: row i uses t[i] and conditions[i].
Tensor analytic_score(const GaussianMixture& mix, const Tensor& x, std::span<const double> t,
                      std::span<const int> conditions);

}  // namespace dipp
