#include "dipp/pipeline.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>

#include "json.hpp"

#include "dipp/checkpoint.hpp"
#include "dipp/errors.hpp"
#include "dipp/evaluation.hpp"

namespace dipp {

namespace fs = std::filesystem;

namespace {

// Per-stage RNG seeds derived from the run seed.
constexpr std::uint64_t kPretrainStream = 0;
constexpr std::uint64_t kDistillStream = 1;
constexpr std::uint64_t kAlignStream = 2;
constexpr std::uint64_t kEvalStream = 3;

std::uint64_t stage_seed(const ExperimentConfig& c, std::uint64_t stream) { return c.run.seed * 16 + stream; }

void prepare_run_dir(const ExperimentConfig& config) {
  std::error_code ec;
  fs::create_directories(config.run.out, ec);
  if (ec) throw Error("cannot create output directory '" + config.run.out + "': " + ec.message());
  save_config(config, run_path(config, artifact::kConfig));
}

void require_file(const std::string& path, const std::string& what) {
  if (!fs::exists(path)) throw UsageError(what + " not found at '" + path + "'");
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  out << text;
  out.close();
  if (!out) throw Error("failed to write '" + path + "'");
}

MetricRecord align_record(const AlignMetrics& m) {
  MetricRecord r;
  r.step = m.step;
  r.values["ta_loss"] = m.ta_loss;
  r.values["pseudo_loss"] = m.pseudo_loss;
  r.values["score_diff_norm"] = m.score_diff_norm;
  if (!std::isnan(m.mean_reward)) r.values["mean_reward"] = m.mean_reward;
  return r;
}

// Runs the alternating loop and writes the EMA generator, the TA and the
// metrics, closing the log with an evaluation row.
StageResult finish_alignment(const ExperimentConfig& config, const std::string& stage, const OneStepGenerator& base,
                             const DenoiserNet& reference, const RewardSpec* reward, const AlignConfig& align,
                             const std::string& generator_file, const std::string& ta_file,
                             const std::string& metrics_file, const ProgressFn& progress) {
  MetricLog log;
  const AlignResult res = dipp_align(base, reference, reference, reward, align, [&](const AlignMetrics& m) {
    MetricRecord r = align_record(m);
    if (progress) progress(stage, r);
    log.append(std::move(r));
  });

  const GaussianMixture mix = make_mixture(config);
  Rng eval_rng(stage_seed(config, kEvalStream));
  MetricRecord final = eval_generator(res.generator, mix, reward, config.eval.samples, eval_rng);
  final.step = align.steps;
  if (progress) progress(stage, final);
  log.append(final);

  const auto hash = model_hash(config);
  StageResult out;
  out.artifacts = {run_path(config, generator_file), run_path(config, ta_file), run_path(config, metrics_file)};
  save_checkpoint(make_checkpoint(res.generator, ModelKind::generator_ema, align.steps, hash), out.artifacts[0]);
  save_checkpoint(make_checkpoint(res.ta, ModelKind::ta, align.steps, hash), out.artifacts[1]);
  emit_metrics_csv(log.records(), out.artifacts[2]);
  out.final_metrics = final;
  return out;
}

}  // namespace

std::string run_path(const ExperimentConfig& config, const std::string& name) {
  return (fs::path(config.run.out) / name).string();
}

StageResult run_pretrain_ref(const ExperimentConfig& config, const ProgressFn& progress) {
  config.validate();
  prepare_run_dir(config);
  const auto mix = std::make_shared<GaussianMixture>(make_mixture(config));
  Rng rng(stage_seed(config, kPretrainStream));
  DenoiserNet ref(make_arch(config), rng);
  const auto& p = config.pretrain;
  AdamState opt(ref.params().size(), AdamConfig{p.lr, p.beta1, p.beta2, 1e-8});
  DsmOptions options;
  options.steps = p.steps;
  options.batch = p.batch;
  options.condition_drop = p.condition_drop;
  options.final_lr_scale = p.final_lr_scale;
  const auto trace = dsm_train(ref, mixture_sampler(mix), make_time_sampler(config), opt, options, rng);

  MetricLog log;
  for (std::size_t i = 0; i < trace.size(); ++i) {
    MetricRecord r;
    r.step = i;
    r.values["dsm_loss"] = trace[i];
    if (progress) progress("pretrain-ref", r);
    log.append(std::move(r));
  }
  StageResult out;
  out.artifacts = {run_path(config, artifact::kReference), run_path(config, artifact::kPretrainMetrics)};
  save_checkpoint(make_checkpoint(ref, ModelKind::reference, p.steps, model_hash(config)), out.artifacts[0]);
  if (!log.records().empty()) {
    emit_metrics_csv(log.records(), out.artifacts[1]);
    out.final_metrics = log.records().back();
  } else {
    out.artifacts.pop_back();
  }
  return out;
}

StageResult run_distill(const ExperimentConfig& config, const ProgressFn& progress) {
  config.validate();
  const std::string ref_path = run_path(config, artifact::kReference);
  require_file(ref_path, "reference checkpoint (run pretrain-ref first)");
  const DenoiserNet ref = load_denoiser(ref_path, ModelKind::reference, make_arch(config), model_hash(config));
  prepare_run_dir(config);
  const AlignConfig align = make_align_config(config, config.distill, stage_seed(config, kDistillStream));
  const OneStepGenerator base = init_from_reference(ref, make_arch(config), config.schedule.sigma_init);
  return finish_alignment(config, "distill", base, ref, nullptr, align, artifact::kGenerator, artifact::kDistillTa,
                          artifact::kDistillMetrics, progress);
}

StageResult run_align(const ExperimentConfig& config, const AlignRunOptions& options, const ProgressFn& progress) {
  config.validate();
  if (options.tag.empty()) throw UsageError("align output tag must not be empty");
  const std::string ref_path = run_path(config, artifact::kReference);
  const std::string base_path =
      options.base_generator.empty() ? run_path(config, artifact::kGenerator) : options.base_generator;
  require_file(base_path, "distilled generator checkpoint (run distill first)");
  require_file(ref_path, "reference checkpoint (run pretrain-ref first)");
  const auto arch = make_arch(config);
  const auto hash = model_hash(config);
  const OneStepGenerator base = load_generator(base_path, arch, hash);
  const DenoiserNet ref = load_denoiser(ref_path, ModelKind::reference, arch, hash);
  prepare_run_dir(config);

  const GaussianMixture mix = make_mixture(config);
  const RewardSpec reward = make_reward(config, mix);
  const AlignConfig align = make_align_config(config, config.align, stage_seed(config, kAlignStream));
  return finish_alignment(config, "align", base, ref, &reward, align, options.tag + ".ckpt",
                          options.tag + "_ta.ckpt", options.tag + "_metrics.csv", progress);
}

StageResult run_eval(const ExperimentConfig& config, const std::string& checkpoint, std::size_t samples) {
  config.validate();
  require_file(checkpoint, "generator checkpoint");
  const OneStepGenerator gen = load_generator(checkpoint, make_arch(config), model_hash(config));
  const GaussianMixture mix = make_mixture(config);
  const RewardSpec reward = make_reward(config, mix);
  Rng rng(stage_seed(config, kEvalStream));
  const Checkpoint header = load_checkpoint(checkpoint);
  MetricRecord rec = eval_generator(gen, mix, &reward, samples ? samples : config.eval.samples, rng);
  rec.step = header.step;

  std::error_code ec;
  fs::create_directories(config.run.out, ec);
  if (ec) throw Error("cannot create output directory '" + config.run.out + "': " + ec.message());
  const std::string stem = fs::path(checkpoint).stem().string();
  StageResult out;
  out.artifacts = {run_path(config, "eval_" + stem + ".json"), run_path(config, "eval_" + stem + ".csv")};
  write_text(out.artifacts[0], metric_record_json(rec) + "\n");
  emit_metrics_csv({rec}, out.artifacts[1]);
  out.final_metrics = rec;
  return out;
}

std::vector<CheckReport> run_verify(const ExperimentConfig& config) {
  auto reports = run_all_checks(config.run.seed);
  std::error_code ec;
  fs::create_directories(config.run.out, ec);
  if (ec) throw Error("cannot create output directory '" + config.run.out + "': " + ec.message());
  write_text(run_path(config, artifact::kVerifyReport), reports_to_json(reports) + "\n");
  return reports;
}

std::string metric_record_json(const MetricRecord& record) {
  nlohmann::json j;
  j["step"] = record.step;
  for (const auto& [k, v] : record.values) j["metrics"][k] = v;
  return j.dump(2);
}

}  // namespace dipp
