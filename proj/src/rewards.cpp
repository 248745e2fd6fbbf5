#include "dipp/rewards.hpp"

#include "dipp/errors.hpp"

namespace dipp {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

const std::vector<double>& target_for(const QuadraticReward& q, int condition, std::size_t dim) {
  if (condition < 0 || static_cast<std::size_t>(condition) >= q.targets.size()) {
    throw ConfigError("quadratic reward has no target for condition " + std::to_string(condition));
  }
  const auto& target = q.targets[static_cast<std::size_t>(condition)];
  if (target.size() != dim) throw DimensionError("reward target dimension mismatch");
  return target;
}

int density_condition(const MixtureDensity& d, int condition) {
  return d.conditional ? condition : kNullCondition;
}

double require_time(std::optional<double> t) {
  if (!t) throw UsageError("log-ratio reward needs a time level t");
  if (!(*t >= 0.0)) throw DomainError("log-ratio reward needs t >= 0");
  return *t;
}

}  // namespace

LogRatioReward cfg_log_ratio_reward(std::shared_ptr<const GaussianMixture> mix,
                                    std::function<double(double)> weight) {
  return LogRatioReward{{mix, true}, {mix, false}, std::move(weight)};
}

QuadraticReward quadratic_toward_component(const GaussianMixture& mix, std::size_t component,
                                           double scale) {
  QuadraticReward q;
  q.scale = scale;
  for (std::size_t c = 0; c < mix.num_conditions(); ++c) {
    const auto& comps = mix.components(c);
    q.targets.push_back(comps.at(component % comps.size()).mean);
  }
  return q;
}

bool reward_needs_time(const RewardSpec& spec) {
  return std::holds_alternative<LogRatioReward>(spec);
}

double reward_eval(const RewardSpec& spec, std::span<const double> x, int condition,
                   std::optional<double> t) {
  return std::visit(
      overloaded{
          [&](const QuadraticReward& q) {
            const auto& target = target_for(q, condition, x.size());
            double sq = 0.0;
            for (std::size_t i = 0; i < x.size(); ++i) sq += (x[i] - target[i]) * (x[i] - target[i]);
            return -q.scale * sq;
          },
          [&](const LogRatioReward& r) {
            const double time = require_time(t);
            const double num = r.numerator.mixture->log_density(x, time, density_condition(r.numerator, condition));
            const double den =
                r.denominator.mixture->log_density(x, time, density_condition(r.denominator, condition));
            return r.weight(time) * (num - den);
          }},
      spec);
}

std::vector<double> reward_grad(const RewardSpec& spec, std::span<const double> x, int condition,
                                std::optional<double> t) {
  return std::visit(
      overloaded{
          [&](const QuadraticReward& q) {
            const auto& target = target_for(q, condition, x.size());
            std::vector<double> g(x.size());
            for (std::size_t i = 0; i < x.size(); ++i) g[i] = -2.0 * q.scale * (x[i] - target[i]);
            return g;
          },
          [&](const LogRatioReward& r) {
            const double time = require_time(t);
            auto num = analytic_score(*r.numerator.mixture, x, time, density_condition(r.numerator, condition));
            const auto den =
                analytic_score(*r.denominator.mixture, x, time, density_condition(r.denominator, condition));
            const double w = r.weight(time);
            for (std::size_t i = 0; i < num.size(); ++i) num[i] = w * (num[i] - den[i]);
            return num;
          }},
      spec);
}

std::vector<double> reward_eval(const RewardSpec& spec, const Tensor& x, std::span<const int> conditions,
                                std::span<const double> t) {
  if (conditions.size() != x.rows() || (!t.empty() && t.size() != x.rows())) {
    throw DimensionError("reward_eval: batch size mismatch");
  }
  std::vector<double> out(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    out[i] = reward_eval(spec, x.row(i), conditions[i], t.empty() ? std::nullopt : std::optional(t[i]));
  }
  return out;
}

Tensor reward_grad(const RewardSpec& spec, const Tensor& x, std::span<const int> conditions,
                   std::span<const double> t) {
  if (conditions.size() != x.rows() || (!t.empty() && t.size() != x.rows())) {
    throw DimensionError("reward_grad: batch size mismatch");
  }
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const auto g = reward_grad(spec, x.row(i), conditions[i], t.empty() ? std::nullopt : std::optional(t[i]));
    std::copy(g.begin(), g.end(), out.row(i).begin());
  }
  return out;
}

}  // namespace dipp
