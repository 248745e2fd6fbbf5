#include <cmath>
#include <set>

#include "doctest.h"
#include "json.hpp"
#include "support.hpp"

#include "dipp/errors.hpp"
#include "dipp/verify.hpp"

using namespace dipp;

namespace {

GaussianGeneratorInstance two_d_instance() {
  GaussianGeneratorInstance inst;
  inst.mu = {0.4, -0.3};
  inst.log_scale = 0.1;
  inst.reference = {{0.2, 0.5}, 1.5};
  inst.reward_target = {1.0, 1.0};
  inst.reward_scale = 0.3;
  inst.beta = 0.7;
  return inst;
}

double kl_t(const GaussianGeneratorInstance& inst, double t) {
  const double s2 = std::exp(2.0 * inst.log_scale);
  return gaussian_kl({inst.mu, s2 + t * t}, {inst.reference.mean, inst.reference.variance + t * t});
}

}  // namespace

TEST_CASE("closed-form Gaussian KL") {
  CHECK(gaussian_kl({{0.3, 0.1}, 2.0}, {{0.3, 0.1}, 2.0}) == doctest::Approx(0.0));
  CHECK(gaussian_kl({{0.0}, 1.0}, {{1.0}, 1.0}) == doctest::Approx(0.5));
  CHECK(gaussian_kl({{0.0}, 2.0}, {{0.0}, 1.0}) == doctest::Approx(0.5 * (2.0 - 1.0 - std::log(2.0))));
  // Dimension scales the variance part.
  CHECK(gaussian_kl({{0.0, 0.0}, 2.0}, {{0.0, 0.0}, 1.0}) == doctest::Approx(2.0 - 1.0 - std::log(2.0)));
  CHECK_THROWS_AS(gaussian_kl({{0.0}, 0.0}, {{0.0}, 1.0}), DomainError);
  CHECK_THROWS_AS(gaussian_kl({{0.0}, 1.0}, {{0.0}, -1.0}), DomainError);
  CHECK_THROWS_AS(gaussian_kl({{0.0}, 1.0}, {{0.0, 1.0}, 1.0}), DimensionError);
}

TEST_CASE("objectives agree with sampling") {
  const auto inst = two_d_instance();
  const double s = std::exp(inst.log_scale);
  Rng rng(1);
  const std::size_t n = 400000;
  double sum = 0.0, sum2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double sq = 0.0;
    for (std::size_t j = 0; j < 2; ++j) {
      const double x = inst.mu[j] + s * rng.normal();
      sq += (x - inst.reward_target[j]) * (x - inst.reward_target[j]);
    }
    const double v = inst.reward_scale * sq;
    sum += v;
    sum2 += v * v;
  }
  const double mean = sum / n;
  const double se = std::sqrt((sum2 / n - mean * mean) / n);
  CHECK(std::abs(expected_negative_reward(inst) - mean) < 4.0 * se);

  CHECK(kl_objective(inst) ==
        doctest::Approx(expected_negative_reward(inst) + inst.beta * gaussian_kl(inst.generator(), inst.reference)));

  GaussianGeneratorInstance same = inst;
  same.mu = inst.reference.mean;
  same.log_scale = 0.5 * std::log(inst.reference.variance);
  same.reward_scale = 0.0;
  CHECK(kl_objective(same) == doctest::Approx(0.0).scale(1.0));
}

TEST_CASE("integral KL objective against a Monte Carlo time average") {
  const auto inst = two_d_instance();
  const TimeSampler time;
  const auto weight = [](double t) { return 1.0 / (1.0 + t); };
  Rng rng(2);
  const std::size_t n = 400000;
  double sum = 0.0, sum2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = sample_time(time, rng);
    const double v = weight(t) * kl_t(inst, t);
    sum += v;
    sum2 += v * v;
  }
  const double mean = sum / n;
  const double se = std::sqrt((sum2 / n - mean * mean) / n);
  const double expected = expected_negative_reward(inst) + inst.beta * mean;
  CHECK(std::abs(ikl_objective(inst, time, weight) - expected) < 4.0 * se);

  CHECK(ikl_objective(inst, time, [](double) { return 0.0; }) == doctest::Approx(expected_negative_reward(inst)));
  CHECK_THROWS_AS(ikl_objective(inst, time, weight, 32), ConfigError);
}

TEST_CASE("finite differences of a quadratic are exact") {
  const auto g = finite_difference_gradient(
      [](const std::vector<double>& p) { return 3.0 * p[0] * p[0] - p[0] * p[1] + 2.0 * p[1]; }, {1.0, -2.0});
  CHECK(g[0] == doctest::Approx(8.0).epsilon(1e-9));
  CHECK(g[1] == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("instance parameter packing") {
  auto inst = two_d_instance();
  const auto theta = inst.theta();
  REQUIRE(theta.size() == 3);
  CHECK(theta[2] == inst.log_scale);
  const auto moved = inst.with_theta({1.0, 2.0, -0.5});
  CHECK(moved.mu == std::vector<double>{1.0, 2.0});
  CHECK(moved.generator().variance == doctest::Approx(std::exp(-1.0)));
  CHECK_THROWS_AS(inst.with_theta({1.0}), DimensionError);
  inst.beta = 0.0;
  CHECK_THROWS_AS(inst.validate(), ConfigError);
}

TEST_CASE("Theorem 1 estimator matches the objective gradient") {
  const CheckReport r = theorem1_check(two_d_instance(), 1'000'000, 3);
  INFO(r.detail);
  CHECK(r.pass);
  CHECK(r.measured_error <= r.tolerance);
}

TEST_CASE("Theorem 1 estimator distinguishes the wrong objective") {
  const auto inst = two_d_instance();
  Rng rng(4);
  const auto est = theorem1_gradient(inst, 1'000'000, rng);
  GaussianGeneratorInstance wrong = inst;
  wrong.beta = 2.0 * inst.beta;
  const auto fd = finite_difference_gradient([&](const std::vector<double>& p) { return kl_objective(wrong.with_theta(p)); },
                                             inst.theta());
  double worst = 0.0;
  for (std::size_t i = 0; i < fd.size(); ++i) worst = std::max(worst, std::abs(est.mean[i] - fd[i]) / std::abs(fd[i]));
  CHECK(worst > 0.05);
}

TEST_CASE("Theorem 2 estimator matches the objective gradient") {
  const CheckReport r =
      theorem2_check(two_d_instance(), TimeSampler{}, [](double t) { return 1.0 / (1.0 + t); }, 1'000'000, 5);
  INFO(r.detail);
  CHECK(r.pass);
}

TEST_CASE("score expectation vanishes") {
  const auto inst = two_d_instance();
  Rng rng(6);
  const auto est = score_expectation(inst, 200000, rng);
  REQUIRE(est.mean.size() == inst.param_count() + 1);
  CHECK(est.mean.back() == 0.0);
  const CheckReport r = score_expectation_check(inst, 200000, 7);
  CHECK(r.pass);
}

TEST_CASE("guidance identity") {
  const auto mix = GaussianMixture::ring(2, 3, 3, 4.0, 0.5);
  const CheckReport r = theorem3_check(mix, {1.0, 0.5, 0.25, 4.0}, 200, 8);
  INFO(r.detail);
  CHECK(r.pass);
  CHECK(r.measured_error < 1e-12);
  CHECK_THROWS_AS(theorem3_check(mix, {0.0}, 10, 8), ConfigError);
}

TEST_CASE("all checks and the JSON report") {
  const auto reports = run_all_checks(0);
  REQUIRE(reports.size() == 5);
  std::set<std::string> names;
  for (const auto& r : reports) {
    INFO(r.name << ": " << r.detail);
    CHECK(r.pass);
    names.insert(r.name);
  }
  CHECK(names.size() == 5);

  const auto j = nlohmann::json::parse(reports_to_json(reports));
  CHECK(j.at("all_pass").get<bool>());
  REQUIRE(j.at("checks").size() == 5);
  for (const auto& c : j.at("checks")) {
    CHECK(c.contains("name"));
    CHECK(c.at("measured_error").is_number());
    CHECK(c.at("tolerance").is_number());
    CHECK(c.at("pass").is_boolean());
  }

  auto failing = reports;
  failing[0].pass = false;
  CHECK_FALSE(nlohmann::json::parse(reports_to_json(failing)).at("all_pass").get<bool>());
}
