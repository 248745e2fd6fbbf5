#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "support.hpp"

#include "dipp/checkpoint.hpp"
#include "dipp/config.hpp"
#include "dipp/errors.hpp"
#include "dipp/evaluation.hpp"
#include "dipp/metrics.hpp"
#include "dipp/pipeline.hpp"

using namespace dipp;
namespace fs = std::filesystem;

namespace {

std::string read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_bytes(const std::string& path, const std::string& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << data;
}

std::string error_message(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

ExperimentConfig tiny_config(const std::string& out) {
  ExperimentConfig c = default_config();
  c.run.out = out;
  c.run.seed = 3;
  c.network.hidden = {8, 8};
  c.pretrain.steps = 40;
  c.pretrain.batch = 32;
  c.distill.steps = 10;
  c.distill.batch = 16;
  c.align.steps = 10;
  c.align.batch = 16;
  c.eval.samples = 200;
  return c;
}

DenoiserNet small_net(std::uint64_t seed) {
  DenoiserArch a;
  a.dim = 2;
  a.num_conditions = 3;
  a.hidden = {4, 3};
  Rng rng(seed);
  return DenoiserNet(a, rng);
}

// E|Z| for Z ~ N(mu, sigma^2)
double folded_normal_mean(double mu, double sigma) {
  return sigma * std::sqrt(2.0 / std::numbers::pi) * std::exp(-mu * mu / (2.0 * sigma * sigma)) +
         mu * std::erf(mu / (sigma * std::sqrt(2.0)));
}

}  // namespace

TEST_CASE("config round trip") {
  const ExperimentConfig d = default_config();
  CHECK(parse_config(serialize_config(d)) == d);

  ExperimentConfig c = d;
  c.run.seed = 123456789012345ull;
  c.run.out = "runs/with space";
  c.mixture.radius = 1.0 / 3.0;
  c.schedule.p_std = 0.1;
  c.network.hidden = {7, 5};
  c.network.activation = Activation::silu;
  c.pretrain.lr = 1e-300;
  c.align.alpha_cfg = 4.5;
  c.distill.final_lr_scale = 0.07;
  c.align.weighting = GeneratorWeighting::denoiser;
  c.reward.target_component = 2;
  const ExperimentConfig back = parse_config(serialize_config(c));
  CHECK(back == c);
  CHECK(serialize_config(back) == serialize_config(c));

  const std::string dir = testing::scratch_dir("config_rt");
  save_config(c, dir + "/c.ini");
  CHECK(load_config(dir + "/c.ini") == c);
}

TEST_CASE("config parsing keeps unset keys at their defaults") {
  const ExperimentConfig c = parse_config("# comment\n[align]\nalpha_rew = 10  # strong\n\n[run]\nseed = 4\n");
  ExperimentConfig expected = default_config();
  expected.align.alpha_rew = 10.0;
  expected.run.seed = 4;
  CHECK(c == expected);
  CHECK(parse_config("") == default_config());
}

TEST_CASE("config errors name the location") {
  CHECK(error_message([] { parse_config("[run]\nseed = 1\n[bogus]\n", "x.ini"); }).find("x.ini:3") != std::string::npos);
  CHECK(error_message([] { parse_config("[run]\nsede = 1\n", "x.ini"); }).find("x.ini:2") != std::string::npos);
  CHECK(error_message([] { parse_config("[run]\nseed = 1\nseed = 2\n", "x.ini"); }).find("x.ini:3") !=
        std::string::npos);
  CHECK_THROWS_AS(parse_config("[align]\nalpha_rew = ten\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[network]\nhidden = [8, 8\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[align]\nk_ta = 0\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[distill]\nalpha_rew = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("seed = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[align]\nweighting = lambda\n"), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/dir/c.ini"), ConfigError);
}

TEST_CASE("model hash covers what defines a model") {
  const ExperimentConfig d = default_config();
  ExperimentConfig c = d;
  c.align.alpha_rew = 7.0;
  c.run.seed = 9;
  c.pretrain.steps = 5;
  CHECK(model_hash(c) == model_hash(d));
  c.mixture.radius = 3.0;
  CHECK(model_hash(c) != model_hash(d));
  c = d;
  c.network.hidden = {64, 64};
  CHECK(model_hash(c) != model_hash(d));
  c = d;
  c.schedule.sigma_data = 0.6;
  CHECK(model_hash(c) != model_hash(d));
}

TEST_CASE("checkpoint round trip") {
  const std::string dir = testing::scratch_dir("ckpt_rt");
  const DenoiserNet net = small_net(1);
  const Checkpoint c = make_checkpoint(net, ModelKind::ta, 17, 0xdeadbeefcafef00dull);
  save_checkpoint(c, dir + "/a.ckpt");
  CHECK(load_checkpoint(dir + "/a.ckpt") == c);
  const DenoiserNet back = load_denoiser(dir + "/a.ckpt", ModelKind::ta, net.arch(), c.config_hash);
  CHECK(std::equal(back.params().begin(), back.params().end(), net.params().begin()));

  const OneStepGenerator gen(small_net(2), 1.75);
  save_checkpoint(make_checkpoint(gen, ModelKind::generator_ema, 3, 5), dir + "/g.ckpt");
  const OneStepGenerator g2 = load_generator(dir + "/g.ckpt");
  CHECK(g2.sigma_init() == 1.75);
  CHECK(std::equal(g2.params().begin(), g2.params().end(), gen.params().begin()));
  save_checkpoint(make_checkpoint(gen, ModelKind::generator, 3, 5), dir + "/g_raw.ckpt");
  CHECK(load_generator(dir + "/g_raw.ckpt").sigma_init() == 1.75);

  // Fixed little-endian header.
  const std::string bytes = read_bytes(dir + "/a.ckpt");
  CHECK(bytes.substr(0, 8) == "DIPPCKPT");
  CHECK(static_cast<unsigned char>(bytes[8]) == kCheckpointVersion);
  CHECK(bytes[9] == 0);
  CHECK(static_cast<unsigned char>(bytes[12]) == static_cast<unsigned char>(ModelKind::ta));
}

TEST_CASE("damaged checkpoints are rejected") {
  const std::string dir = testing::scratch_dir("ckpt_bad");
  const Checkpoint c = make_checkpoint(small_net(3), ModelKind::reference, 1, 2);
  save_checkpoint(c, dir + "/a.ckpt");
  const std::string bytes = read_bytes(dir + "/a.ckpt");

  for (std::size_t len : {std::size_t{0}, std::size_t{5}, std::size_t{12}, std::size_t{40}, bytes.size() - 1}) {
    write_bytes(dir + "/t.ckpt", bytes.substr(0, len));
    CHECK_THROWS_AS(load_checkpoint(dir + "/t.ckpt"), LoadError);
  }
  write_bytes(dir + "/t.ckpt", bytes + "x");
  CHECK_THROWS_AS(load_checkpoint(dir + "/t.ckpt"), LoadError);

  std::string magic = bytes;
  magic[0] = 'X';
  write_bytes(dir + "/t.ckpt", magic);
  CHECK_THROWS_AS(load_checkpoint(dir + "/t.ckpt"), LoadError);

  std::string version = bytes;
  version[8] = 2;
  write_bytes(dir + "/t.ckpt", version);
  CHECK(error_message([&] { load_checkpoint(dir + "/t.ckpt"); }).find("version 2") != std::string::npos);

  CHECK_THROWS_AS(load_checkpoint(dir + "/missing.ckpt"), LoadError);
}

TEST_CASE("checkpoint kind, architecture and hash checks") {
  const std::string dir = testing::scratch_dir("ckpt_kind");
  const DenoiserNet net = small_net(4);
  save_checkpoint(make_checkpoint(net, ModelKind::ta, 1, 0xabcull), dir + "/ta.ckpt");
  CHECK_THROWS_AS(load_denoiser(dir + "/ta.ckpt", ModelKind::reference), LoadError);
  CHECK_THROWS_AS(load_generator(dir + "/ta.ckpt"), LoadError);

  DenoiserArch other = net.arch();
  other.hidden = {4, 4};
  const std::string arch_msg = error_message([&] { load_denoiser(dir + "/ta.ckpt", ModelKind::ta, other); });
  CHECK(arch_msg.find(net.arch().describe()) != std::string::npos);
  CHECK(arch_msg.find(other.describe()) != std::string::npos);

  const std::string hash_msg =
      error_message([&] { load_denoiser(dir + "/ta.ckpt", ModelKind::ta, std::nullopt, 0x123ull); });
  CHECK(hash_msg.find("abc") != std::string::npos);
  CHECK(hash_msg.find("123") != std::string::npos);
}

TEST_CASE("metrics CSV round trip with missing cells") {
  MetricLog log;
  log.append({0, {{"ta_loss", 1.5}, {"pseudo_loss", -0.1}}});
  log.append({1, {{"ta_loss", 1.0 / 3.0}, {"mean_reward", -2.25}, {"zeta_extra", 1e-300}}});
  log.append({5, {{"energy_distance", 0.004}, {"alpha_extra", std::nan("")}}});
  CHECK_THROWS_AS(log.append({5, {}}), UsageError);
  CHECK_THROWS_AS(log.append({2, {}}), UsageError);

  const auto cols = metric_columns(log.records());
  const auto& standard = standard_metric_columns();
  REQUIRE(cols.size() == standard.size() + 2);
  CHECK(std::equal(standard.begin(), standard.end(), cols.begin()));
  CHECK(cols[cols.size() - 2] == "alpha_extra");
  CHECK(cols.back() == "zeta_extra");

  std::stringstream ss;
  write_metrics_csv(log.records(), ss);
  const std::string text = ss.str();
  CHECK(text.find("0.33333333333333331") != std::string::npos);
  const auto back = parse_metrics_csv(ss);
  REQUIRE(back.size() == 3);
  CHECK(back[0] == log.records()[0]);
  CHECK(back[1] == log.records()[1]);
  CHECK(back[2].get("energy_distance") == 0.004);
  CHECK_FALSE(back[2].get("alpha_extra").has_value());
  CHECK_FALSE(back[0].get("mean_reward").has_value());

  const std::string dir = testing::scratch_dir("csv");
  emit_metrics_csv(log.records(), dir + "/m.csv");
  CHECK(read_metrics_csv(dir + "/m.csv").size() == 3);
  CHECK_THROWS_AS(emit_metrics_csv({}, dir + "/e.csv"), UsageError);

  std::stringstream sel;
  write_selected_columns(log.records(), {"ta_loss"}, sel);
  CHECK(sel.str().substr(0, 13) == "step,ta_loss\n");
  std::stringstream bad_sel;
  CHECK_THROWS_AS(write_selected_columns(log.records(), {"nope"}, bad_sel), UsageError);
}

TEST_CASE("malformed metrics CSV") {
  std::stringstream empty;
  CHECK_THROWS_AS(parse_metrics_csv(empty), LoadError);
  std::stringstream no_step("x,y\n1,2\n");
  CHECK_THROWS_AS(parse_metrics_csv(no_step), LoadError);
  std::stringstream ragged("step,ta_loss\n1,2,3\n");
  CHECK_THROWS_AS(parse_metrics_csv(ragged), LoadError);
  std::stringstream junk("step,ta_loss\n1,abc\n");
  CHECK_THROWS_AS(parse_metrics_csv(junk), LoadError);
}

TEST_CASE("energy distance") {
  const Tensor a({2, 1}, {0.0, 2.0});
  const Tensor b({2, 1}, {1.0, 3.0});
  // cross mean 1.5, within means 2 and 2
  CHECK(energy_distance(a, b) == doctest::Approx(-1.0));
  CHECK_THROWS_AS(energy_distance(a, Tensor({2, 2})), DimensionError);
  CHECK_THROWS_AS(energy_distance(a, Tensor({1, 1})), DimensionError);

  // N(0, 1) against N(delta, 1) in one dimension.
  Rng rng(5);
  const double delta = 0.7;
  const std::size_t n = 3000;
  Tensor x({n, 1}), y({n, 1});
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = rng.normal();
    y[i] = delta + rng.normal();
  }
  const double expected = 2.0 * folded_normal_mean(delta, std::sqrt(2.0)) - 2.0 * folded_normal_mean(0.0, std::sqrt(2.0));
  CHECK(std::abs(energy_distance(x, y) - expected) < 0.03);
}

TEST_CASE("evaluation of the exact sampler") {
  const auto mix = std::make_shared<GaussianMixture>(GaussianMixture::ring(2, 3, 3, 4.0, 0.5));
  const RewardSpec reward = quadratic_toward_component(*mix, 0);
  Rng rng(6);
  const MetricRecord m = eval_sampler(mixture_sampler(mix), *mix, &reward, 3000, rng);
  CHECK(*m.get("energy_distance") < 0.02);
  CHECK(*m.get("mean_error") < 0.15);
  for (int k = 0; k < 3; ++k) CHECK(m.get("mean_error_c" + std::to_string(k)).has_value());
  CHECK(*m.get("mean_reward") < 0.0);
  CHECK(*m.get("cfg_log_ratio") == doctest::Approx(std::log(3.0)).epsilon(0.02));
  CHECK_THROWS_AS(eval_sampler(mixture_sampler(mix), *mix, nullptr, 50, rng), ConfigError);
  const MetricRecord no_reward = eval_sampler(mixture_sampler(mix), *mix, nullptr, 300, rng);
  CHECK_FALSE(no_reward.get("mean_reward").has_value());
}

TEST_CASE("Euler sampler on a single Gaussian") {
  const std::vector<double> mean = {1.0, -2.0};
  const double sd = 0.8;
  const auto mix = std::make_shared<GaussianMixture>(
      2, std::vector<std::vector<MixtureComponent>>{{{mean, sd * sd, 1.0}}});
  const MixtureDenoiser denoiser(mix);
  Rng rng(7);
  const std::size_t n = 4000;
  const Tensor x = euler_reference_sampler(denoiser, std::vector<int>(n, 0), 200, DiffusionSchedule{}, rng);
  for (std::size_t j = 0; j < 2; ++j) {
    double s = 0.0, s2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      s += x(i, j);
      s2 += x(i, j) * x(i, j);
    }
    const double m = s / n;
    const double v = s2 / n - m * m;
    CHECK(std::abs(m - mean[j]) < 0.05 * std::max(1.0, std::abs(mean[j])));
    CHECK(std::abs(std::sqrt(v) / sd - 1.0) < 0.05);
  }
  CHECK_THROWS_AS(euler_reference_sampler(denoiser, std::vector<int>(2, 0), 1, DiffusionSchedule{}, rng), ConfigError);
}

TEST_CASE("pipeline stages in isolation") {
  const std::string dir = testing::scratch_dir("pipeline");
  const ExperimentConfig c = tiny_config(dir);

  CHECK_THROWS_AS(run_distill(c), UsageError);
  CHECK_THROWS_AS(run_align(c), UsageError);

  const StageResult pre = run_pretrain_ref(c);
  CHECK(fs::exists(run_path(c, artifact::kReference)));
  CHECK(fs::exists(run_path(c, artifact::kConfig)));
  CHECK(load_config(run_path(c, artifact::kConfig)) == c);
  CHECK(read_metrics_csv(run_path(c, artifact::kPretrainMetrics)).size() == c.pretrain.steps);
  CHECK(pre.final_metrics.get("dsm_loss").has_value());
  const std::string ref_bytes = read_bytes(run_path(c, artifact::kReference));

  const StageResult dist = run_distill(c);
  CHECK(dist.artifacts.size() == 3);
  CHECK(read_bytes(run_path(c, artifact::kReference)) == ref_bytes);
  const auto dist_log = read_metrics_csv(run_path(c, artifact::kDistillMetrics));
  REQUIRE(dist_log.size() == c.distill.steps + 1);
  CHECK(dist_log.back().step == c.distill.steps);
  CHECK(dist_log.back().get("energy_distance").has_value());
  CHECK_FALSE(dist_log.front().get("mean_reward").has_value());
  const std::string gen_bytes = read_bytes(run_path(c, artifact::kGenerator));

  // Same seed, same bytes.
  run_distill(c);
  CHECK(read_bytes(run_path(c, artifact::kGenerator)) == gen_bytes);

  const StageResult al = run_align(c, {"", "aligned_test"});
  CHECK(fs::exists(run_path(c, "aligned_test.ckpt")));
  CHECK(read_bytes(run_path(c, artifact::kReference)) == ref_bytes);
  CHECK(read_bytes(run_path(c, artifact::kGenerator)) == gen_bytes);
  CHECK(al.final_metrics.get("mean_reward").has_value());
  CHECK_THROWS_AS(run_align(c, {"", ""}), UsageError);

  const StageResult ev = run_eval(c, run_path(c, "aligned_test.ckpt"), 300);
  const auto j = nlohmann::json::parse(read_bytes(ev.artifacts[0]));
  CHECK(j.at("step").get<std::size_t>() == c.align.steps);
  CHECK(j.at("metrics").contains("energy_distance"));
  CHECK(j.at("metrics").at("mean_reward").get<double>() == *ev.final_metrics.get("mean_reward"));

  // A config that changes the model definition cannot reuse the artifacts.
  ExperimentConfig moved = c;
  moved.mixture.radius = 3.0;
  CHECK_THROWS_AS(run_distill(moved), LoadError);
  CHECK_THROWS_AS(run_eval(moved, run_path(c, "aligned_test.ckpt")), LoadError);
  ExperimentConfig wider = c;
  wider.network.hidden = {16, 8};
  CHECK_THROWS_AS(run_align(wider), LoadError);
  CHECK_THROWS_AS(run_eval(c, run_path(c, artifact::kReference)), LoadError);
}
