#include "dipp/mixture.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "dipp/errors.hpp"

namespace dipp {

GaussianMixture::GaussianMixture(std::size_t dim,
                                 std::vector<std::vector<MixtureComponent>> per_condition)
    : dim_(dim), components_(std::move(per_condition)) {
  if (dim_ == 0) throw ConfigError("mixture dimension must be positive");
  if (components_.empty()) throw ConfigError("mixture needs at least one condition");
  for (auto& comps : components_) {
    if (comps.empty()) throw ConfigError("every condition needs at least one component");
    double total = 0.0;
    for (const auto& c : comps) {
      if (c.mean.size() != dim_) {
        throw DimensionError("component mean has " + std::to_string(c.mean.size()) +
                             " coordinates, mixture dimension is " + std::to_string(dim_));
      }
      if (!(c.variance > 0.0)) throw ConfigError("component variances must be positive");
      if (!(c.weight > 0.0)) throw ConfigError("component weights must be positive");
      total += c.weight;
    }
    for (auto& c : comps) c.weight /= total;
  }
}

GaussianMixture GaussianMixture::ring(std::size_t dim, std::size_t conditions,
                                      std::size_t components, double radius, double sigma) {
  if (dim < 2) throw ConfigError("ring mixture needs dim >= 2");
  if (conditions == 0 || components == 0) throw ConfigError("ring mixture needs components");
  const double total = static_cast<double>(conditions * components);
  std::vector<std::vector<MixtureComponent>> per(conditions);
  for (std::size_t c = 0; c < conditions; ++c) {
    for (std::size_t k = 0; k < components; ++k) {
      const double angle = 2.0 * std::numbers::pi * static_cast<double>(c * components + k) / total;
      MixtureComponent comp;
      comp.mean.assign(dim, 0.0);
      comp.mean[0] = radius * std::cos(angle);
      comp.mean[1] = radius * std::sin(angle);
      comp.variance = sigma * sigma;
      comp.weight = 1.0;
      per[c].push_back(std::move(comp));
    }
  }
  return GaussianMixture(dim, std::move(per));
}

void GaussianMixture::check_condition(int condition) const {
  if (condition != kNullCondition &&
      (condition < 0 || static_cast<std::size_t>(condition) >= num_conditions())) {
    throw ConfigError("condition index " + std::to_string(condition) + " out of range [0, " +
                      std::to_string(num_conditions()) + ")");
  }
}

std::vector<GaussianMixture::Term> GaussianMixture::terms(int condition) const {
  check_condition(condition);
  std::vector<Term> out;
  if (condition == kNullCondition) {
    const double log_prior = -std::log(static_cast<double>(num_conditions()));
    for (const auto& comps : components_) {
      for (const auto& c : comps) out.push_back({&c, log_prior + std::log(c.weight)});
    }
  } else {
    for (const auto& c : components_[static_cast<std::size_t>(condition)]) {
      out.push_back({&c, std::log(c.weight)});
    }
  }
  return out;
}

namespace {

// log N(x; mean, var I) for each term plus its log weight.
std::vector<double> log_joint(std::span<const double> x, double t,
                              std::span<const MixtureComponent* const> comps,
                              std::span<const double> log_weights) {
  const double d = static_cast<double>(x.size());
  std::vector<double> out(comps.size());
  for (std::size_t k = 0; k < comps.size(); ++k) {
    const double var = comps[k]->variance + t * t;
    double sq = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double diff = x[i] - comps[k]->mean[i];
      sq += diff * diff;
    }
    out[k] = log_weights[k] - 0.5 * d * std::log(2.0 * std::numbers::pi * var) - 0.5 * sq / var;
  }
  return out;
}

double log_sum_exp(std::span<const double> v) {
  const double m = *std::max_element(v.begin(), v.end());
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

}  // namespace

double GaussianMixture::log_density(std::span<const double> x, double t, int condition) const {
  if (x.size() != dim_) throw DimensionError("log_density: point dimension mismatch");
  const auto ts = terms(condition);
  std::vector<const MixtureComponent*> comps;
  std::vector<double> lw;
  for (const auto& term : ts) {
    comps.push_back(term.component);
    lw.push_back(term.log_weight);
  }
  const auto lj = log_joint(x, t, comps, lw);
  return log_sum_exp(lj);
}

void GaussianMixture::score(std::span<const double> x, double t, int condition,
                            std::span<double> out) const {
  if (x.size() != dim_ || out.size() != dim_) throw DimensionError("score: point dimension mismatch");
  const auto ts = terms(condition);
  std::vector<const MixtureComponent*> comps;
  std::vector<double> lw;
  for (const auto& term : ts) {
    comps.push_back(term.component);
    lw.push_back(term.log_weight);
  }
  const auto lj = log_joint(x, t, comps, lw);
  const double lse = log_sum_exp(lj);
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t k = 0; k < comps.size(); ++k) {
    const double resp = std::exp(lj[k] - lse);
    const double var = comps[k]->variance + t * t;
    for (std::size_t i = 0; i < dim_; ++i) out[i] -= resp * (x[i] - comps[k]->mean[i]) / var;
  }
}

std::vector<double> GaussianMixture::mean(int condition) const {
  std::vector<double> m(dim_, 0.0);
  for (const auto& term : terms(condition)) {
    const double w = std::exp(term.log_weight);
    for (std::size_t i = 0; i < dim_; ++i) m[i] += w * term.component->mean[i];
  }
  return m;
}

Tensor GaussianMixture::sample(std::span<const int> conditions, Rng& rng) const {
  Tensor out({conditions.size(), dim_});
  for (std::size_t n = 0; n < conditions.size(); ++n) {
    int c = conditions[n];
    check_condition(c);
    if (c == kNullCondition) c = rng.uniform_int(static_cast<int>(num_conditions()));
    const auto& comps = components_[static_cast<std::size_t>(c)];
    double u = rng.uniform();
    std::size_t k = 0;
    while (k + 1 < comps.size() && u >= comps[k].weight) {
      u -= comps[k].weight;
      ++k;
    }
    const double sd = std::sqrt(comps[k].variance);
    for (std::size_t i = 0; i < dim_; ++i) out(n, i) = comps[k].mean[i] + sd * rng.normal();
  }
  return out;
}

std::vector<double> analytic_score(const GaussianMixture& mix, std::span<const double> x, double t,
                                   int condition) {
  std::vector<double> out(mix.dim());
  mix.score(x, t, condition, out);
  return out;
}

Tensor analytic_score(const GaussianMixture& mix, const Tensor& x, std::span<const double> t,
                      std::span<const int> conditions) {
  if (x.rank() != 2 || x.cols() != mix.dim() || t.size() != x.rows() ||
      conditions.size() != x.rows()) {
    throw DimensionError("analytic_score: batch shape " + shape_string(x.shape()) +
                         " inconsistent with times/conditions");
  }
  Tensor out(x.shape());
  for (std::size_t n = 0; n < x.rows(); ++n) mix.score(x.row(n), t[n], conditions[n], out.row(n));
  return out;
}

}  // namespace dipp
