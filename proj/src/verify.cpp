#include "dipp/verify.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include <boost/math/quadrature/gauss.hpp>
#include "json.hpp"

#include "dipp/align.hpp"
#include "dipp/errors.hpp"
#include "dipp/generator.hpp"
#include "dipp/rewards.hpp"

namespace dipp {

namespace {

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

// Streaming per-coordinate mean and standard error.
class Accumulator {
 public:
  explicit Accumulator(std::size_t n) : sum_(n, 0.0), sum_sq_(n, 0.0) {}

  void add(std::span<const double> v) {
    for (std::size_t i = 0; i < v.size(); ++i) {
      sum_[i] += v[i];
      sum_sq_[i] += v[i] * v[i];
    }
    ++count_;
  }

  GradientEstimate finish() const {
    GradientEstimate e;
    const double n = static_cast<double>(count_);
    for (std::size_t i = 0; i < sum_.size(); ++i) {
      const double mean = sum_[i] / n;
      const double var = std::max(sum_sq_[i] / n - mean * mean, 0.0) * n / std::max(n - 1.0, 1.0);
      e.mean.push_back(mean);
      e.std_error.push_back(std::sqrt(var / n));
    }
    return e;
  }

 private:
  std::vector<double> sum_;
  std::vector<double> sum_sq_;
  std::size_t count_ = 0;
};

std::string format_values(const std::vector<double>& v) {
  std::ostringstream os;
  os.precision(10);
  os << "[";
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? ", " : "") << v[i];
  os << "]";
  return os.str();
}

CheckReport relative_error_report(std::string name, const GradientEstimate& est, const std::vector<double>& fd,
                                  double tolerance) {
  CheckReport r;
  r.name = std::move(name);
  r.tolerance = tolerance;
  for (std::size_t i = 0; i < fd.size(); ++i) {
    const double rel = std::abs(est.mean[i] - fd[i]) / std::max(std::abs(fd[i]), 1e-300);
    r.measured_error = std::max(r.measured_error, rel);
  }
  r.pass = r.measured_error <= tolerance;
  r.detail = "estimate " + format_values(est.mean) + " se " + format_values(est.std_error) + " fd " +
             format_values(fd);
  return r;
}

}  // namespace

double gaussian_kl(const IsoGaussian& p, const IsoGaussian& q) {
  if (!(p.variance > 0.0) || !(q.variance > 0.0)) throw DomainError("gaussian_kl: variances must be positive");
  if (p.mean.size() != q.mean.size()) throw DimensionError("gaussian_kl: dimension mismatch");
  const double d = static_cast<double>(p.mean.size());
  const double ratio = p.variance / q.variance;
  return 0.5 * (d * ratio + squared_distance(p.mean, q.mean) / q.variance - d - d * std::log(ratio));
}

std::vector<double> GaussianGeneratorInstance::theta() const {
  std::vector<double> th = mu;
  th.push_back(log_scale);
  return th;
}

GaussianGeneratorInstance GaussianGeneratorInstance::with_theta(const std::vector<double>& theta) const {
  if (theta.size() != param_count()) throw DimensionError("with_theta: wrong parameter count");
  GaussianGeneratorInstance out = *this;
  std::copy(theta.begin(), theta.end() - 1, out.mu.begin());
  out.log_scale = theta.back();
  return out;
}

IsoGaussian GaussianGeneratorInstance::generator() const { return {mu, std::exp(2.0 * log_scale)}; }

void GaussianGeneratorInstance::validate() const {
  if (mu.empty()) throw DimensionError("instance needs at least one dimension");
  if (reference.mean.size() != mu.size()) throw DimensionError("reference dimension mismatch");
  if (!(reference.variance > 0.0)) throw DomainError("reference variance must be positive");
  if (reward_scale != 0.0 && reward_target.size() != mu.size()) {
    throw DimensionError("reward target dimension mismatch");
  }
  if (!(beta > 0.0)) throw ConfigError("beta must be positive");
}

double expected_negative_reward(const GaussianGeneratorInstance& inst) {
  if (inst.reward_scale == 0.0) return 0.0;
  const double var = std::exp(2.0 * inst.log_scale);
  return inst.reward_scale * (squared_distance(inst.mu, inst.reward_target) + static_cast<double>(inst.dim()) * var);
}

double kl_objective(const GaussianGeneratorInstance& inst) {
  inst.validate();
  return expected_negative_reward(inst) + inst.beta * gaussian_kl(inst.generator(), inst.reference);
}

double ikl_objective(const GaussianGeneratorInstance& inst, const TimeSampler& time,
                     const std::function<double(double)>& weight, std::size_t nodes) {
  inst.validate();
  time.validate();
  if (nodes != 64) throw ConfigError("ikl_objective: only the 64-node rule is provided");
  const IsoGaussian gen = inst.generator();
  const auto kl_at = [&](double t) {
    const IsoGaussian p{gen.mean, gen.variance + t * t};
    const IsoGaussian q{inst.reference.mean, inst.reference.variance + t * t};
    return weight(t) * gaussian_kl(p, q);
  };
  double expectation = 0.0;
  const double lo = std::log(time.t_min);
  const double hi = std::log(time.t_max);
  if (time.p_std == 0.0) {
    expectation = kl_at(std::clamp(std::exp(time.p_mean), time.t_min, time.t_max));
  } else {
    const auto density = [&](double u) {
      const double z = (u - time.p_mean) / time.p_std;
      return std::exp(-0.5 * z * z) / (time.p_std * std::sqrt(2.0 * std::numbers::pi));
    };
    expectation = boost::math::quadrature::gauss<double, 64>::integrate(
        [&](double u) { return density(u) * kl_at(std::exp(u)); }, lo, hi);
    expectation += normal_cdf((lo - time.p_mean) / time.p_std) * kl_at(time.t_min);
    expectation += normal_cdf(-(hi - time.p_mean) / time.p_std) * kl_at(time.t_max);
  }
  return expected_negative_reward(inst) + inst.beta * expectation;
}

std::vector<double> finite_difference_gradient(const std::function<double(const std::vector<double>&)>& f,
                                               const std::vector<double>& theta, double h) {
  std::vector<double> g(theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) {
    std::vector<double> plus = theta;
    std::vector<double> minus = theta;
    plus[i] += h;
    minus[i] -= h;
    g[i] = (f(plus) - f(minus)) / (2.0 * h);
  }
  return g;
}

GradientEstimate theorem1_gradient(const GaussianGeneratorInstance& inst, std::size_t samples, Rng& rng) {
  inst.validate();
  const std::size_t d = inst.dim();
  const double scale = std::exp(inst.log_scale);
  const double var = scale * scale;
  Accumulator acc(inst.param_count());
  std::vector<double> z(d), g(inst.param_count());
  for (std::size_t n = 0; n < samples; ++n) {
    for (double& v : z) v = rng.normal();
    double g_s = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      const double x = inst.mu[i] + scale * z[i];
      const double reward_grad = inst.reward_scale == 0.0 ? 0.0 : -2.0 * inst.reward_scale * (x - inst.reward_target[i]);
      const double score_gen = -(x - inst.mu[i]) / var;
      const double score_ref = -(x - inst.reference.mean[i]) / inst.reference.variance;
      const double gx = -reward_grad + inst.beta * (score_gen - score_ref);
      g[i] = gx;            // dx/dmu = 1
      g_s += gx * scale * z[i];  // dx/ds = exp(s) z
    }
    g[d] = g_s;
    acc.add(g);
  }
  return acc.finish();
}

GradientEstimate theorem2_gradient(const GaussianGeneratorInstance& inst, const TimeSampler& time,
                                   const std::function<double(double)>& weight, std::size_t samples, Rng& rng) {
  inst.validate();
  time.validate();
  const std::size_t d = inst.dim();
  const double scale = std::exp(inst.log_scale);
  const double var = scale * scale;
  Accumulator acc(inst.param_count());
  std::vector<double> z(d), eps(d), g(inst.param_count());
  for (std::size_t n = 0; n < samples; ++n) {
    const double t = sample_time(time, rng);
    const double w = weight(t);
    for (double& v : z) v = rng.normal();
    for (double& v : eps) v = rng.normal();
    double g_s = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      const double x0 = inst.mu[i] + scale * z[i];
      const double xt = x0 + t * eps[i];
      const double reward_grad =
          inst.reward_scale == 0.0 ? 0.0 : -2.0 * inst.reward_scale * (x0 - inst.reward_target[i]);
      const double score_gen = -(xt - inst.mu[i]) / (var + t * t);
      const double score_ref = -(xt - inst.reference.mean[i]) / (inst.reference.variance + t * t);
      const double gx = -reward_grad + inst.beta * w * (score_gen - score_ref);
      g[i] = gx;
      g_s += gx * scale * z[i];
    }
    g[d] = g_s;
    acc.add(g);
  }
  return acc.finish();
}

GradientEstimate score_expectation(const GaussianGeneratorInstance& inst, std::size_t samples, Rng& rng) {
  inst.validate();
  const std::size_t d = inst.dim();
  const double var = std::exp(2.0 * inst.log_scale);
  Accumulator acc(inst.param_count() + 1);
  std::vector<double> g(inst.param_count() + 1, 0.0);
  for (std::size_t n = 0; n < samples; ++n) {
    double sq = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      const double x = inst.mu[i] + std::sqrt(var) * rng.normal();
      g[i] = (x - inst.mu[i]) / var;
      sq += (x - inst.mu[i]) * (x - inst.mu[i]);
    }
    g[d] = sq / var - static_cast<double>(d);
    g[d + 1] = 0.0;  // log p_theta does not depend on this slot
    acc.add(g);
  }
  return acc.finish();
}

CheckReport theorem1_check(const GaussianGeneratorInstance& inst, std::size_t samples, std::uint64_t seed,
                           double fd_step, double tolerance) {
  Rng rng(seed);
  const GradientEstimate est = theorem1_gradient(inst, samples, rng);
  const auto fd = finite_difference_gradient(
      [&](const std::vector<double>& th) { return kl_objective(inst.with_theta(th)); }, inst.theta(), fd_step);
  return relative_error_report("theorem1_kl_gradient", est, fd, tolerance);
}

CheckReport theorem2_check(const GaussianGeneratorInstance& inst, const TimeSampler& time,
                           const std::function<double(double)>& weight, std::size_t samples, std::uint64_t seed,
                           double fd_step, double tolerance) {
  Rng rng(seed);
  const GradientEstimate est = theorem2_gradient(inst, time, weight, samples, rng);
  const auto fd = finite_difference_gradient(
      [&](const std::vector<double>& th) { return ikl_objective(inst.with_theta(th), time, weight); },
      inst.theta(), fd_step);
  return relative_error_report("theorem2_ikl_gradient", est, fd, tolerance);
}

CheckReport pseudo_loss_equivalence_check(std::size_t seeds, std::uint64_t seed, double tolerance) {
  constexpr std::size_t kDim = 2;
  constexpr std::size_t kConditions = 3;
  constexpr std::size_t kBatch = 16;
  CheckReport report;
  report.name = "pseudo_loss_gradient";
  report.tolerance = tolerance;
  double largest_grad = 0.0;

  for (std::size_t s = 0; s < seeds; ++s) {
    Rng rng(seed * 1000003ULL + s);
    DenoiserArch arch;
    arch.dim = kDim;
    arch.num_conditions = kConditions;
    arch.hidden = {8, 8};
    arch.activation = s % 2 ? Activation::silu : Activation::tanh;
    const OneStepGenerator gen(DenoiserNet(arch, rng), 0.5 + 3.0 * rng.uniform());
    const DenoiserNet ta(arch, rng);
    const DenoiserNet ref(arch, rng);

    QuadraticReward quad;
    quad.scale = 0.1 + rng.uniform();
    for (std::size_t c = 0; c < kConditions; ++c) quad.targets.push_back({4.0 * rng.normal(), 4.0 * rng.normal()});
    const RewardSpec reward = quad;

    AlignConfig cfg;
    cfg.alpha_rew = s % 5 == 0 ? 0.0 : 10.0 * rng.uniform();
    cfg.alpha_cfg = s % 7 == 0 ? 1.0 : 0.5 + 4.0 * rng.uniform();
    cfg.weighting = static_cast<GeneratorWeighting>(s % 3);
    cfg.batch = kBatch;

    const PseudoLossBatch batch = sample_pseudo_loss_batch(gen, kBatch, rng, cfg.time);
    const PseudoLossResult autograd = generator_pseudo_loss(gen, ta, ref, &reward, cfg, batch);

    // Direct assembly: (1/B) sum_i J_i^T (-alpha_rew grad r_i + w_i y_i).
    DenoiserTape tape;
    const Tensor x0 = gen.generate(batch.z, batch.conditions, tape);
    Tensor xt(x0.shape());
    for (std::size_t i = 0; i < kBatch; ++i) {
      for (std::size_t j = 0; j < kDim; ++j) xt(i, j) = x0(i, j) + batch.t[i] * batch.noise(i, j);
    }
    const std::vector<int> nulls(kBatch, kNullCondition);
    const Tensor d_ta = ta.denoise(xt, batch.t, batch.conditions);
    const Tensor d_c = ref.denoise(xt, batch.t, batch.conditions);
    const Tensor d_u = ref.denoise(xt, batch.t, nulls);

    std::vector<double> direct(gen.params().size(), 0.0);
    for (std::size_t i = 0; i < kBatch; ++i) {
      const double t2 = batch.t[i] * batch.t[i];
      double y[kDim];
      double y_sq = 0.0;
      for (std::size_t j = 0; j < kDim; ++j) {
        const double s_ta = (d_ta(i, j) - xt(i, j)) / t2;
        const double s_c = (d_c(i, j) - xt(i, j)) / t2;
        const double s_u = (d_u(i, j) - xt(i, j)) / t2;
        y[j] = s_ta - (s_u + cfg.alpha_cfg * (s_c - s_u));
        y_sq += y[j] * y[j];
      }
      double w = 1.0;
      if (cfg.weighting == GeneratorWeighting::denoiser) w = t2;
      if (cfg.weighting == GeneratorWeighting::w_gen) w = t2 / std::max(t2 * std::sqrt(y_sq), cfg.w_gen_floor);

      const auto& target = quad.targets[static_cast<std::size_t>(batch.conditions[i])];
      for (std::size_t j = 0; j < kDim; ++j) {
        const double reward_grad = -2.0 * quad.scale * (x0(i, j) - target[j]);
        Tensor onehot({kBatch, kDim});
        onehot(i, j) = 1.0;
        const auto jac_row = gen.backward(tape, onehot);
        const double coeff = (-cfg.alpha_rew * reward_grad + w * y[j]) / static_cast<double>(kBatch);
        for (std::size_t p = 0; p < direct.size(); ++p) direct[p] += coeff * jac_row[p];
      }
    }
    for (std::size_t p = 0; p < direct.size(); ++p) {
      report.measured_error = std::max(report.measured_error, std::abs(direct[p] - autograd.grad[p]));
      largest_grad = std::max(largest_grad, std::abs(direct[p]));
    }
  }
  report.pass = report.measured_error <= tolerance;
  std::ostringstream os;
  os << seeds << " seeds, largest gradient entry " << largest_grad;
  report.detail = os.str();
  return report;
}

CheckReport theorem3_check(const GaussianMixture& mix, const std::vector<double>& betas, std::size_t samples,
                           std::uint64_t seed, double tolerance) {
  CheckReport report;
  report.name = "theorem3_cfg_identity";
  report.tolerance = tolerance;
  Rng rng(seed);

  // A generator whose diffused score differs from the reference: the same
  // mixture with every mean shifted and variances inflated.
  std::vector<std::vector<MixtureComponent>> shifted;
  for (std::size_t c = 0; c < mix.num_conditions(); ++c) {
    auto comps = mix.components(c);
    for (auto& comp : comps) {
      for (double& m : comp.mean) m += 0.3;
      comp.variance *= 1.5;
    }
    shifted.push_back(std::move(comps));
  }
  const GaussianMixture gen(mix.dim(), shifted);
  const TimeSampler time;
  const int conditions = static_cast<int>(mix.num_conditions());

  for (double beta : betas) {
    if (!(beta > 0.0)) throw ConfigError("theorem3_check: beta must be positive");
    const double alpha_cfg = 1.0 + 1.0 / beta;
    for (std::size_t n = 0; n < samples; ++n) {
      const int c = rng.uniform_int(conditions);
      const double t = sample_time(time, rng);
      const double w = t * t;
      const int cs[1] = {c};
      const Tensor x0 = mix.sample(cs, rng);
      std::vector<double> xt(mix.dim());
      for (std::size_t j = 0; j < mix.dim(); ++j) xt[j] = x0(0, j) + t * rng.normal();

      const auto s_c = analytic_score(mix, xt, t, c);
      const auto s_u = analytic_score(mix, xt, t, kNullCondition);
      const auto s_g = analytic_score(gen, xt, t, c);
      for (std::size_t j = 0; j < mix.dim(); ++j) {
        // DI++ with implicit reward log p(x_t|c) - log p(x_t) at regularization beta.
        const double di_pp = -w * (s_c[j] - s_u[j]) + beta * w * (s_g[j] - s_c[j]);
        // Diff-Instruct against the guided score at scale 1 + 1/beta.
        const double di_cfg = beta * w * (s_g[j] - (s_u[j] + alpha_cfg * (s_c[j] - s_u[j])));
        report.measured_error = std::max(report.measured_error, std::abs(di_pp - di_cfg));
      }
    }
  }
  report.pass = report.measured_error <= tolerance;
  report.detail = std::to_string(samples) + " samples x " + std::to_string(betas.size()) + " beta values";
  return report;
}

CheckReport score_expectation_check(const GaussianGeneratorInstance& inst, std::size_t samples, std::uint64_t seed,
                                    double sigmas) {
  Rng rng(seed);
  const GradientEstimate est = score_expectation(inst, samples, rng);
  CheckReport report;
  report.name = "score_expectation_vanishes";
  report.tolerance = sigmas;
  for (std::size_t i = 0; i < est.mean.size(); ++i) {
    const double ratio = est.std_error[i] > 0.0 ? std::abs(est.mean[i]) / est.std_error[i]
                                                : (est.mean[i] == 0.0 ? 0.0 : INFINITY);
    report.measured_error = std::max(report.measured_error, ratio);
  }
  report.pass = report.measured_error <= sigmas;
  report.detail = "mean " + format_values(est.mean) + " se " + format_values(est.std_error);
  return report;
}

GaussianGeneratorInstance default_verify_instance() {
  GaussianGeneratorInstance inst;
  inst.mu = {0.7};
  inst.log_scale = -0.2;
  inst.reference = {{0.0}, 1.0};
  inst.reward_target = {0.0};
  inst.reward_scale = 1.0;  // r(x) = -x^2
  inst.beta = 1.0;
  return inst;
}

std::vector<CheckReport> run_all_checks(std::uint64_t seed) {
  const auto inst = default_verify_instance();
  const auto unit = [](double) { return 1.0; };
  const GaussianMixture mix = GaussianMixture::ring(2, 3, 3, 4.0, 0.5);
  return {
      theorem1_check(inst, 1'000'000, seed),
      theorem2_check(inst, TimeSampler{}, unit, 1'000'000, seed + 1),
      pseudo_loss_equivalence_check(50, seed + 2),
      theorem3_check(mix, {1.0, 2.0 / 5.0, 2.0 / 7.0}, 1000, seed + 3),
      score_expectation_check(inst, 1'000'000, seed + 4),
  };
}

std::string reports_to_json(const std::vector<CheckReport>& reports) {
  nlohmann::json checks = nlohmann::json::array();
  bool all = true;
  for (const auto& r : reports) {
    checks.push_back({{"name", r.name},
                      {"measured_error", r.measured_error},
                      {"tolerance", r.tolerance},
                      {"pass", r.pass},
                      {"detail", r.detail}});
    all = all && r.pass;
  }
  return nlohmann::json{{"checks", checks}, {"all_pass", all}}.dump(2);
}

}  // namespace dipp
