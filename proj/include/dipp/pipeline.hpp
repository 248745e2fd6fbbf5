#pragma once

#include <functional>
#include <string>
#include <vector>

#include "dipp/config.hpp"
#include "dipp/metrics.hpp"
#include "dipp/verify.hpp"

namespace dipp {

// File names inside the run directory.
namespace artifact {
inline constexpr const char* kConfig = "config.ini";
inline constexpr const char* kReference = "reference.ckpt";
inline constexpr const char* kGenerator = "generator.ckpt";  // distilled, EMA weights
inline constexpr const char* kDistillTa = "distill_ta.ckpt";
inline constexpr const char* kPretrainMetrics = "pretrain_metrics.csv";
inline constexpr const char* kDistillMetrics = "distill_metrics.csv";
inline constexpr const char* kVerifyReport = "verify_report.json";
}  // namespace artifact

std::string run_path(const ExperimentConfig& config, const std::string& name);

// Called with (stage, record) for every logged step.
using ProgressFn = std::function<void(const std::string&, const MetricRecord&)>;

struct StageResult {
  std::vector<std::string> artifacts;
  MetricRecord final_metrics;
};

/// Stage 1: denoising regression of the reference on the mixture.
StageResult run_pretrain_ref(const ExperimentConfig& config, const ProgressFn& progress = {});

/// Stage 2: reward-free distillation of the stored reference.
StageResult run_distill(const ExperimentConfig& config, const ProgressFn& progress = {});

/// Stage 3: reward alignment starting from the distilled generator.
/// Outputs <tag>.ckpt, <tag>_ta.ckpt and <tag>_metrics.csv.
struct AlignRunOptions {
  std::string base_generator;  // defaults to the run's generator.ckpt
  std::string tag = "aligned";
};
StageResult run_align(const ExperimentConfig& config, const AlignRunOptions& options = {},
                      const ProgressFn& progress = {});

/// Evaluates a generator checkpoint on eval.samples samples (or `samples`
/// when nonzero). Writes eval_<stem>.json and eval_<stem>.csv.
StageResult run_eval(const ExperimentConfig& config, const std::string& checkpoint, std::size_t samples = 0);

std::vector<CheckReport> run_verify(const ExperimentConfig& config);

std::string metric_record_json(const MetricRecord& record);

}  // namespace dipp
