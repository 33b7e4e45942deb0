#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "grpolab/config.hpp"
#include "grpolab/errors.hpp"
#include "grpolab/experiment.hpp"
#include "grpolab/selftest.hpp"
#include "grpolab/version.hpp"

namespace {

grpolab::ExperimentConfig load_config(const std::string& config_path,
                                      const std::string& out_dir) {
  grpolab::ExperimentConfig cfg;
  if (!config_path.empty()) {
    cfg = grpolab::ExperimentConfig::load_file(config_path);
  }
  if (!out_dir.empty()) cfg.output_dir = out_dir;
  cfg.validate();
  return cfg;
}

int cmd_calibrate(const std::string& config_path, const std::string& out_dir) {
  const grpolab::CalibrateResult result =
      grpolab::run_calibrate(load_config(config_path, out_dir));
  for (const grpolab::TargetCheck& c : result.checks) {
    std::printf("%-18s target %.4f  estimate %.4f  se %.5f  %s\n",
                c.name.c_str(), c.target, c.estimate, c.std_error,
                c.pass ? "ok" : "OUTSIDE 3 SE");
  }
  std::printf("calibration %s (n=%d)\n", result.all_pass ? "verified" : "FAILED",
              result.n_samples);
  return result.all_pass ? 0 : 1;
}

int cmd_run(const std::string& config_path, const std::string& out_dir,
            const std::uint64_t* seed) {
  const grpolab::ExperimentConfig cfg = load_config(config_path, out_dir);
  const grpolab::RunOutputs out = grpolab::run_experiment(
      cfg, seed ? std::optional<std::uint64_t>(*seed) : std::nullopt);
  std::printf("run complete: %d steps -> %s\n", out.result.steps_completed,
              out.dir.string().c_str());
  if (!out.result.evals.empty()) {
    const auto& first = out.result.evals.front();
    const auto& last = out.result.evals.back();
    std::printf("accuracy %.4f -> %.4f, pattern frequency %.4f -> %.4f\n",
                first.accuracy, last.accuracy, first.pattern_frequency,
                last.pattern_frequency);
  }
  if (out.has_flow) {
    for (int id = 0; id < 4; ++id) {
      const grpolab::FlowCell& cell = out.flow.cells[id];
      std::printf("%-18s count %2d  net correct delta %+lld",
                  grpolab::FlowTable::cell_name(id), cell.count,
                  static_cast<long long>(cell.net_correct_delta));
      if (!out.contribution.no_net_change) {
        std::printf("  contribution %+.4f",
                    out.contribution.contribution[id]);
      }
      std::printf("\n");
    }
    if (out.contribution.no_net_change) {
      std::printf("no net change in correct classes\n");
    }
  }
  return 0;
}

int cmd_sweep(const std::string& config_path, const std::string& out_dir,
              const std::string& axis) {
  const grpolab::SweepResult result =
      grpolab::run_sweep(load_config(config_path, out_dir), axis);
  for (const grpolab::SweepCell& cell : result.cells) {
    std::printf("%s=%s seed=%llu %s%s%s\n", result.axis.c_str(),
                cell.value.c_str(),
                static_cast<unsigned long long>(cell.seed),
                cell.ok ? "ok" : "FAILED",
                cell.ok ? "" : ": ", cell.ok ? "" : cell.error.c_str());
  }
  std::printf("combined CSV: %s\n", result.csv_path.string().c_str());
  return result.all_ok ? 0 : 1;
}

int cmd_report(const std::string& run_dir) {
  grpolab::render_report(run_dir);
  std::printf("report written to %s\n", run_dir.c_str());
  return 0;
}

int cmd_selftest(const std::string& out_dir) {
  const std::filesystem::path work =
      grpolab::resolve_output_dir(out_dir.empty() ? "selftest_out" : out_dir);
  const grpolab::SelfTestSummary summary = grpolab::run_selftest(
      work, [](const grpolab::CriterionResult& r) {
        std::printf("[%2d/12] %s %-28s (%.2fs) %s\n", r.id,
                    r.pass ? "PASS" : "FAIL", r.name.c_str(), r.seconds,
                    r.detail.c_str());
        std::fflush(stdout);
      });
  std::printf("%s: %zu/%zu criteria passed in %.1fs\n",
              summary.all_pass ? "PASS" : "FAIL",
              static_cast<std::size_t>(
                  std::count_if(summary.results.begin(), summary.results.end(),
                                [](const auto& r) { return r.pass; })),
              summary.results.size(), summary.total_seconds);
  return summary.all_pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"grpolab: desk-scale GRPO with the full spurious-reward "
               "spectrum"};
  app.set_version_flag("--version", std::string(grpolab::kVersion));
  app.require_subcommand(1);

  std::string config_path, out_dir, axis = "gamma", run_dir;
  std::uint64_t seed = 0;

  CLI::App* calibrate =
      app.add_subcommand("calibrate", "build and verify the initial policy");
  calibrate->add_option("--config", config_path, "experiment config JSON");
  calibrate->add_option("--out", out_dir, "output directory override");

  CLI::App* run = app.add_subcommand("run", "train under the configured reward");
  run->add_option("--config", config_path, "experiment config JSON");
  run->add_option("--out", out_dir, "output directory override");
  CLI::Option* seed_opt =
      run->add_option("--seed", seed, "override the training seed");

  CLI::App* sweep = app.add_subcommand("sweep", "run one axis of the sweep");
  sweep->add_option("--config", config_path, "experiment config JSON");
  sweep->add_option("--out", out_dir, "output directory override");
  sweep->add_option("--axis", axis, "gamma, clip_mode, or seeds");

  CLI::App* report =
      app.add_subcommand("report", "render CSV and SVG plots for a run");
  report->add_option("run_dir", run_dir, "run directory")->required();

  CLI::App* selftest =
      app.add_subcommand("selftest", "run the acceptance criteria suite");
  selftest->add_option("--out", out_dir, "work directory for run outputs");

  CLI11_PARSE(app, argc, argv);

  try {
    if (calibrate->parsed()) return cmd_calibrate(config_path, out_dir);
    if (run->parsed()) {
      return cmd_run(config_path, out_dir,
                     seed_opt->count() > 0 ? &seed : nullptr);
    }
    if (sweep->parsed()) return cmd_sweep(config_path, out_dir, axis);
    if (report->parsed()) return cmd_report(run_dir);
    if (selftest->parsed()) return cmd_selftest(out_dir);
  } catch (const grpolab::DivergenceError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const grpolab::CalibrationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const grpolab::ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
