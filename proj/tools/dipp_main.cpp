#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "dipp/errors.hpp"
#include "dipp/pipeline.hpp"

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
};

void add_common(CLI::App* cmd, CommonOptions& opts) {
  cmd->add_option("--config", opts.config, "experiment config file (defaults when omitted)");
  cmd->add_option("--seed", opts.seed, "override run.seed");
  cmd->add_option("--out", opts.out, "override run.out, the run directory");
}

dipp::ExperimentConfig resolve(const CommonOptions& opts) {
  dipp::ExperimentConfig c = opts.config.empty() ? dipp::default_config() : dipp::load_config(opts.config);
  if (opts.seed) c.run.seed = *opts.seed;
  if (opts.out) c.run.out = *opts.out;
  c.validate();
  return c;
}

std::string format_record(const dipp::MetricRecord& r) {
  std::ostringstream os;
  os << "step " << r.step;
  for (const auto& [k, v] : r.values) os << " " << k << "=" << v;
  return os.str();
}

dipp::ProgressFn progress_every(std::size_t every) {
  return [every](const std::string& stage, const dipp::MetricRecord& r) {
    if (r.step % every == 0 || r.values.count("energy_distance")) {
      std::cerr << "[" << stage << "] " << format_record(r) << "\n";
    }
  };
}

void print_artifacts(const dipp::StageResult& res) {
  for (const auto& a : res.artifacts) std::cout << "wrote " << a << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Diff-Instruct++ toy lab: reward alignment of one-step generators"};
  app.require_subcommand(1);

  CommonOptions pre_opts, dis_opts, ali_opts, eval_opts, ver_opts;
  std::optional<std::size_t> pre_steps, dis_steps, ali_steps;
  std::optional<double> dis_alpha_cfg, ali_alpha_cfg, ali_alpha_rew;
  std::string ali_ckpt, ali_tag = "aligned", eval_ckpt, plot_csv, plot_output;
  std::size_t eval_samples = 0;
  bool verify_all = false;
  std::vector<std::string> verify_checks, plot_columns;

  auto* pre = app.add_subcommand("pretrain-ref", "train the reference denoiser on the mixture");
  add_common(pre, pre_opts);
  pre->add_option("--steps", pre_steps, "override pretrain.steps");

  auto* dis = app.add_subcommand("distill", "distill the reference into a one-step generator");
  add_common(dis, dis_opts);
  dis->add_option("--steps", dis_steps, "override distill.steps");
  dis->add_option("--alpha-cfg", dis_alpha_cfg, "override distill.alpha_cfg");

  auto* ali = app.add_subcommand("align", "reward-align the distilled generator");
  add_common(ali, ali_opts);
  ali->add_option("--steps", ali_steps, "override align.steps");
  ali->add_option("--alpha-rew", ali_alpha_rew, "override align.alpha_rew");
  ali->add_option("--alpha-cfg", ali_alpha_cfg, "override align.alpha_cfg");
  ali->add_option("--ckpt", ali_ckpt, "generator to start from (default: <out>/generator.ckpt)");
  ali->add_option("--tag", ali_tag, "output name prefix")->capture_default_str();

  auto* ev = app.add_subcommand("eval", "evaluate a generator checkpoint");
  add_common(ev, eval_opts);
  ev->add_option("--ckpt", eval_ckpt, "generator checkpoint")->required();
  ev->add_option("--samples", eval_samples, "sample count (default: eval.samples)");

  auto* ver = app.add_subcommand("verify", "run the gradient-identity checks");
  add_common(ver, ver_opts);
  ver->add_flag("--all", verify_all, "run every check");
  ver->add_option("--check", verify_checks, "run only the named check (repeatable)");

  auto* plot = app.add_subcommand("plot-data", "re-emit selected columns of a metrics CSV");
  plot->add_option("csv", plot_csv, "metrics CSV")->required();
  plot->add_option("--columns", plot_columns, "columns to keep (default: all)")->delimiter(',');
  plot->add_option("--output", plot_output, "write here instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*pre) {
      auto c = resolve(pre_opts);
      if (pre_steps) c.pretrain.steps = *pre_steps;
      print_artifacts(dipp::run_pretrain_ref(c, progress_every(1000)));
    } else if (*dis) {
      auto c = resolve(dis_opts);
      if (dis_steps) c.distill.steps = *dis_steps;
      if (dis_alpha_cfg) c.distill.alpha_cfg = *dis_alpha_cfg;
      c.validate();
      const auto res = dipp::run_distill(c, progress_every(1000));
      print_artifacts(res);
      std::cout << dipp::metric_record_json(res.final_metrics) << "\n";
    } else if (*ali) {
      auto c = resolve(ali_opts);
      if (ali_steps) c.align.steps = *ali_steps;
      if (ali_alpha_rew) c.align.alpha_rew = *ali_alpha_rew;
      if (ali_alpha_cfg) c.align.alpha_cfg = *ali_alpha_cfg;
      c.validate();
      const auto res = dipp::run_align(c, {ali_ckpt, ali_tag}, progress_every(500));
      print_artifacts(res);
      std::cout << dipp::metric_record_json(res.final_metrics) << "\n";
    } else if (*ev) {
      const auto c = resolve(eval_opts);
      const auto res = dipp::run_eval(c, eval_ckpt, eval_samples);
      std::cout << dipp::metric_record_json(res.final_metrics) << "\n";
    } else if (*ver) {
      if (!verify_all && verify_checks.empty()) throw dipp::UsageError("verify needs --all or --check NAME");
      const auto c = resolve(ver_opts);
      auto reports = dipp::run_verify(c);
      if (!verify_all) {
        std::vector<dipp::CheckReport> selected;
        for (const auto& name : verify_checks) {
          bool found = false;
          for (const auto& r : reports) {
            if (r.name == name) {
              selected.push_back(r);
              found = true;
            }
          }
          if (!found) throw dipp::UsageError("unknown check '" + name + "'");
        }
        reports = selected;
      }
      bool all = true;
      std::printf("%-28s %14s %12s  %s\n", "check", "error", "tolerance", "result");
      for (const auto& r : reports) {
        std::printf("%-28s %14.6g %12.3g  %s\n", r.name.c_str(), r.measured_error, r.tolerance,
                    r.pass ? "PASS" : "FAIL");
        all = all && r.pass;
      }
      std::cout << "wrote " << dipp::run_path(c, dipp::artifact::kVerifyReport) << "\n";
      return all ? 0 : kExitFailure;
    } else if (*plot) {
      const auto records = dipp::read_metrics_csv(plot_csv);
      if (plot_output.empty()) {
        dipp::write_selected_columns(records, plot_columns, std::cout);
      } else {
        std::ofstream out(plot_output, std::ios::trunc);
        dipp::write_selected_columns(records, plot_columns, out);
        if (!out) throw dipp::Error("failed to write '" + plot_output + "'");
      }
    }
  } catch (const dipp::UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const dipp::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const dipp::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return 0;
}
