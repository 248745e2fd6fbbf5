#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "support.hpp"

#include "dipp/diffusion.hpp"
#include "dipp/errors.hpp"
#include "dipp/generator.hpp"

using namespace dipp;

namespace {

DenoiserArch small_arch(std::size_t dim = 2, std::size_t conditions = 3) {
  DenoiserArch a;
  a.dim = dim;
  a.num_conditions = conditions;
  a.hidden = {8, 8};
  return a;
}

}  // namespace

TEST_CASE("latent draws have variance sigma_init^2") {
  Rng init(1);
  OneStepGenerator gen(DenoiserNet(small_arch(), init), 2.5);
  Rng rng(2);
  const std::size_t n = 200000;
  const Tensor z = gen.sample_latent(n, rng);
  for (std::size_t j = 0; j < 2; ++j) {
    double s = 0.0, s2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      s += z(i, j);
      s2 += z(i, j) * z(i, j);
    }
    const double mean = s / n;
    const double var = s2 / n - mean * mean;
    CHECK(std::abs(mean) < 0.03);
    CHECK(std::abs(var / 6.25 - 1.0) < 0.01);
  }
}

TEST_CASE("empty batch and fixed seeds") {
  Rng init(1);
  OneStepGenerator gen(DenoiserNet(small_arch(), init));
  Rng a(5), b(5);
  const Tensor z0 = gen.sample_latent(0, a);
  CHECK(z0.rows() == 0);
  CHECK(gen.generate(z0, std::vector<int>{}).rows() == 0);

  const std::vector<int> c = {0, 1, 2, 0};
  const Tensor x1 = gen.generate(gen.sample_latent(4, a), c);
  const Tensor x2 = gen.generate(gen.sample_latent(4, b), c);
  CHECK(x1 == x2);
}

TEST_CASE("optimal single-Gaussian denoiser gives the posterior mean") {
  // For data N(0, s^2 I) with sigma_data = s, the optimal denoiser is
  // c_skip(t) x, which the preconditioned form produces with a zero network.
  DenoiserArch arch = small_arch(2, 1);
  arch.sigma_data = 0.5;
  OneStepGenerator gen(DenoiserNet(arch), 2.5);
  Rng rng(3);
  const Tensor z = gen.sample_latent(64, rng);
  const std::vector<int> c(64, 0);
  const Tensor x = gen.generate(z, c);
  const double shrink = 0.25 / (0.25 + 6.25);
  for (std::size_t i = 0; i < z.size(); ++i) CHECK(x[i] == doctest::Approx(shrink * z[i]).epsilon(1e-14));
}

TEST_CASE("zero hidden weights leave the output bias pattern") {
  Rng init(4);
  DenoiserNet net(small_arch(2, 3), init);
  auto& mlp = net.net();
  const std::size_t last = mlp.layer_count() - 1;
  mlp.weight(last).setZero();
  mlp.bias(last) << 0.3, -0.7;
  OneStepGenerator gen(net, 2.5);
  const Preconditioning p = edm_preconditioning(2.5, net.arch().sigma_data);
  const Tensor z({3, 2}, {0, 0, 1, -1, 2, 0.5});
  const std::vector<int> c = {0, 1, 2};
  const Tensor x = gen.generate(z, c);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(x(i, 0) == doctest::Approx(p.c_skip * z(i, 0) + p.c_out * 0.3).epsilon(1e-14));
    CHECK(x(i, 1) == doctest::Approx(p.c_skip * z(i, 1) - p.c_out * 0.7).epsilon(1e-14));
  }
}

TEST_CASE("batch evaluation equals row-wise evaluation") {
  Rng init(6);
  OneStepGenerator gen(DenoiserNet(small_arch(), init));
  Rng rng(7);
  const Tensor z = gen.sample_latent(5, rng);
  const std::vector<int> c = {2, 0, 1, 1, 0};
  const Tensor full = gen.generate(z, c);
  for (std::size_t i = 0; i < 5; ++i) {
    const Tensor zi({1, 2}, {z(i, 0), z(i, 1)});
    const std::vector<int> ci = {c[i]};
    const Tensor xi = gen.generate(zi, ci);
    CHECK(testing::max_abs_diff(xi.row(0), full.row(i)) < 1e-14);
  }
}

TEST_CASE("initialization copies the reference") {
  Rng init(8);
  const DenoiserArch arch = small_arch();
  DenoiserNet ref(arch, init);
  OneStepGenerator gen = init_from_reference(ref, arch);
  CHECK(gen.net().net().params()[0] == ref.params()[0]);

  Rng rng(9);
  const Tensor z = gen.sample_latent(16, rng);
  std::vector<int> c(16);
  for (std::size_t i = 0; i < 16; ++i) c[i] = static_cast<int>(i % 3);
  const std::vector<double> t(16, gen.sigma_init());
  CHECK(gen.generate(z, c) == ref.denoise(z, t, c));

  const std::vector<double> before(ref.params().begin(), ref.params().end());
  for (double& p : gen.params()) p += 1.0;
  CHECK(std::equal(before.begin(), before.end(), ref.params().begin()));

  const OneStepGenerator again = init_from_reference(ref, arch);
  CHECK(std::equal(again.params().begin(), again.params().end(), ref.params().begin()));

  DenoiserArch other = arch;
  other.hidden = {8, 4};
  CHECK_THROWS_AS(init_from_reference(ref, other), ConfigError);
  CHECK_THROWS_AS(OneStepGenerator(ref, 0.0), ConfigError);
}

TEST_CASE("conditions outside the range are rejected") {
  Rng init(10);
  OneStepGenerator gen(DenoiserNet(small_arch(), init));
  const Tensor z({2, 2});
  CHECK_THROWS_AS(gen.generate(z, std::vector<int>{0, 3}), ConfigError);
  CHECK_THROWS_AS(gen.generate(z, std::vector<int>{kNullCondition, 0}), ConfigError);
}

TEST_CASE("parameter gradient matches finite differences") {
  Rng init(11);
  OneStepGenerator gen(DenoiserNet(small_arch(), init));
  Rng rng(12);
  const Tensor z = gen.sample_latent(6, rng);
  const std::vector<int> c = {0, 1, 2, 2, 1, 0};
  const Tensor cot = testing::random_tensor(6, 2, rng);

  DenoiserTape tape;
  gen.generate(z, c, tape);
  const std::vector<double> analytic = gen.backward(tape, cot);

  const std::vector<double> theta(gen.params().begin(), gen.params().end());
  auto f = [&](const std::vector<double>& p) {
    OneStepGenerator g = gen;
    std::copy(p.begin(), p.end(), g.params().begin());
    const Tensor x = g.generate(z, c);
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += cot[i] * x[i];
    return s;
  };
  const auto numeric = testing::central_difference(theta, f, 1e-5);
  double scale = 0.0;
  for (double g : numeric) scale = std::max(scale, std::abs(g));
  CHECK(testing::max_abs_diff(analytic, numeric) < 1e-7 * std::max(1.0, scale));
}
