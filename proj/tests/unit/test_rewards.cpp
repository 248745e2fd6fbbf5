#include <cmath>
#include <memory>
#include <numbers>

#include "doctest.h"
#include "support.hpp"

#include "dipp/errors.hpp"
#include "dipp/rewards.hpp"

using namespace dipp;

namespace {

std::shared_ptr<const GaussianMixture> single_gaussian(double mean, double variance) {
  return std::make_shared<GaussianMixture>(
      1, std::vector<std::vector<MixtureComponent>>{{{{mean}, variance, 1.0}}});
}

}  // namespace

TEST_CASE("quadratic reward value and gradient") {
  QuadraticReward q{{{1.0, -2.0}, {0.0, 3.0}}, 0.5};
  const RewardSpec spec = q;
  const std::vector<double> at_target = {1.0, -2.0};
  CHECK(reward_eval(spec, at_target, 0) == 0.0);
  const auto g0 = reward_grad(spec, at_target, 0);
  CHECK(g0[0] == 0.0);
  CHECK(g0[1] == 0.0);

  const std::vector<double> x = {2.0, 1.0};
  // -0.5 * (1 + 9), gradient -2 * 0.5 * (x - target)
  CHECK(reward_eval(spec, x, 0) == doctest::Approx(-5.0));
  const auto g = reward_grad(spec, x, 0);
  CHECK(g[0] == doctest::Approx(-1.0));
  CHECK(g[1] == doctest::Approx(-3.0));
  CHECK(reward_eval(spec, x, 1) == doctest::Approx(-0.5 * (4.0 + 4.0)));

  QuadraticReward big = q;
  big.scale = 5.0;
  const auto g10 = reward_grad(RewardSpec(big), x, 0);
  CHECK(g10[0] == doctest::Approx(10.0 * g[0]));
  CHECK(g10[1] == doctest::Approx(10.0 * g[1]));

  CHECK_THROWS_AS(reward_eval(spec, x, 2), ConfigError);
  CHECK_THROWS_AS(reward_eval(spec, x, kNullCondition), ConfigError);
  CHECK_FALSE(reward_needs_time(spec));
}

TEST_CASE("quadratic reward toward a mixture component") {
  const auto mix = GaussianMixture::ring(2, 3, 3, 4.0, 0.5);
  const QuadraticReward q = quadratic_toward_component(mix, 1, 0.25);
  REQUIRE(q.targets.size() == 3);
  CHECK(q.scale == 0.25);
  for (std::size_t c = 0; c < 3; ++c) CHECK(q.targets[c] == mix.components(c)[1].mean);
}

TEST_CASE("log-ratio of identical densities vanishes") {
  const auto mix = std::make_shared<GaussianMixture>(GaussianMixture::ring(2, 3, 3, 4.0, 0.5));
  const RewardSpec spec = LogRatioReward{{mix, true}, {mix, true}};
  Rng rng(1);
  for (int i = 0; i < 20; ++i) {
    const std::vector<double> x = {3.0 * rng.normal(), 3.0 * rng.normal()};
    const double t = 0.1 + rng.uniform();
    CHECK(reward_eval(spec, x, i % 3, t) == 0.0);
    const auto g = reward_grad(spec, x, i % 3, t);
    CHECK(g[0] == 0.0);
    CHECK(g[1] == 0.0);
  }
}

TEST_CASE("log-ratio of two one-dimensional Gaussians") {
  // log N(1; 1, 1) - log N(1; 0, 2) = 0.5 log 2 + 1/4
  const RewardSpec spec = LogRatioReward{{single_gaussian(1.0, 1.0), true}, {single_gaussian(0.0, 2.0), true}};
  const std::vector<double> x = {1.0};
  CHECK(reward_eval(spec, x, 0, 0.0) == doctest::Approx(0.5 * std::log(2.0) + 0.25).epsilon(1e-14));
  // d/dx: -(x - 1) / 1 + x / 2 at x = 1
  CHECK(reward_grad(spec, x, 0, 0.0)[0] == doctest::Approx(0.5).epsilon(1e-14));
  // At t = 1 the variances become 2 and 3.
  const double at_t1 = -0.5 * std::log(2.0) + 0.5 * std::log(3.0) + 1.0 / 6.0;
  CHECK(reward_eval(spec, x, 0, 1.0) == doctest::Approx(at_t1).epsilon(1e-14));
}

TEST_CASE("guidance reward gradient is the weighted score difference") {
  const auto mix = std::make_shared<GaussianMixture>(GaussianMixture::ring(2, 3, 3, 4.0, 0.5));
  const RewardSpec spec = cfg_log_ratio_reward(mix, [](double t) { return t * t; });
  CHECK(reward_needs_time(spec));
  Rng rng(2);
  for (int i = 0; i < 25; ++i) {
    std::vector<double> x = {3.0 * rng.normal(), 3.0 * rng.normal()};
    const int c = i % 3;
    const double t = 0.2 + 2.0 * rng.uniform();
    const auto g = reward_grad(spec, x, c, t);
    const auto sc = analytic_score(*mix, x, t, c);
    const auto su = analytic_score(*mix, x, t, kNullCondition);
    for (std::size_t j = 0; j < 2; ++j) CHECK(g[j] == doctest::Approx(t * t * (sc[j] - su[j])).epsilon(1e-12));
    const auto fd = testing::central_difference(
        x, [&](const std::vector<double>& p) { return reward_eval(spec, p, c, t); }, 1e-5);
    CHECK(testing::max_abs_diff(g, fd) < 1e-6 * std::max(1.0, std::abs(g[0]) + std::abs(g[1])));
  }
}

TEST_CASE("reward argument errors") {
  const auto mix = std::make_shared<GaussianMixture>(GaussianMixture::ring(2, 3, 3, 4.0, 0.5));
  const RewardSpec spec = cfg_log_ratio_reward(mix);
  const std::vector<double> x = {0.5, 0.5};
  CHECK_THROWS_AS(reward_eval(spec, x, 0), UsageError);
  CHECK_THROWS_AS(reward_grad(spec, x, 0), UsageError);
  CHECK_THROWS_AS(reward_eval(spec, x, 0, -1.0), DomainError);
  CHECK_THROWS_AS(reward_eval(spec, x, 3, 1.0), ConfigError);

  const RewardSpec q = QuadraticReward{{{0.0, 0.0}}, 1.0};
  const std::vector<double> wrong = {1.0, 2.0, 3.0};
  CHECK_THROWS_AS(reward_eval(q, wrong, 0), DimensionError);
  const Tensor batch({2, 2});
  CHECK_THROWS_AS(reward_eval(q, batch, std::vector<int>{0}), DimensionError);
}

TEST_CASE("batched reward matches per-row evaluation") {
  const auto mix = std::make_shared<GaussianMixture>(GaussianMixture::ring(2, 3, 3, 4.0, 0.5));
  const RewardSpec spec = cfg_log_ratio_reward(mix);
  Rng rng(3);
  const Tensor x = testing::random_tensor(7, 2, rng, 3.0);
  const std::vector<int> c = {0, 1, 2, 0, 1, 2, 0};
  const std::vector<double> t = {0.1, 0.5, 1.0, 2.0, 0.3, 0.7, 4.0};
  const auto r = reward_eval(spec, x, c, t);
  const Tensor g = reward_grad(spec, x, c, t);
  for (std::size_t i = 0; i < 7; ++i) {
    CHECK(r[i] == reward_eval(spec, x.row(i), c[i], t[i]));
    const auto gi = reward_grad(spec, x.row(i), c[i], t[i]);
    CHECK(g(i, 0) == gi[0]);
    CHECK(g(i, 1) == gi[1]);
  }
}
