#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "grpolab/analysis.hpp"
#include "grpolab/config.hpp"
#include "grpolab/grpo.hpp"

namespace grpolab {

// When set, output directories resolve under this root instead of the
// current working directory.
inline constexpr const char* kOutputRootEnv = "GRPOLAB_OUTPUT_ROOT";

std::filesystem::path resolve_output_dir(const std::string& output_dir);

// Provenance record for one run directory; written with status "running"
// before training starts and finalized afterwards. config_hash is the
// FNV-1a hash of the config.json bytes stored next to it.
struct RunManifest {
  std::string name;
  std::string config_hash;
  std::string code_version;
  std::uint64_t seed = 0;
  int start_step = 0;
  int end_step = -1;
  std::string status = "running";
  std::vector<std::string> files;

  void save_file(const std::filesystem::path& path) const;
  static RunManifest load_file(const std::filesystem::path& path);
};

struct TargetCheck {
  std::string name;
  double target = 0.0;
  double estimate = 0.0;
  double std_error = 0.0;
  bool pass = false;
};

struct CalibrateResult {
  PolicyParams params;
  std::vector<TargetCheck> checks;
  bool all_pass = false;
  int n_samples = 0;
};

// Closed-form calibration plus a Monte Carlo verification of every target
// and of the implied overall accuracy, each within 3 standard errors plus
// the configured tolerance.
CalibrateResult calibrate_with_verification(const ExperimentConfig& cfg,
                                            int n_samples = 100000);

// calibrate command: writes policy.txt, calibration.json, and config.json
// into the resolved output directory.
CalibrateResult run_calibrate(const ExperimentConfig& cfg);

struct RunOutputs {
  std::filesystem::path dir;
  TrainResult result;
  FlowTable flow;              // filled when at least two evals exist
  ContributionReport contribution;
  bool has_flow = false;
};

// run command: manifest + config copy, metrics.jsonl, evals.jsonl, policy
// checkpoints, persisted labels for label-based rewards, and the
// flow/contribution report. A DivergenceError is recorded in the manifest
// and rethrown.
RunOutputs run_experiment(
    const ExperimentConfig& cfg,
    std::optional<std::uint64_t> seed_override = std::nullopt,
    std::optional<std::filesystem::path> dir_override = std::nullopt);

struct SweepCell {
  std::string value;  // rendered axis value
  std::uint64_t seed = 0;
  std::filesystem::path dir;
  bool ok = false;
  std::string error;
};

struct SweepResult {
  std::string axis;
  std::vector<SweepCell> cells;
  std::filesystem::path csv_path;
  bool all_ok = false;
};

// sweep command over one axis: "gamma" (Random reward at each value),
// "clip_mode", or "seeds". Every (value, seed) cell is an independent run
// directory; failures are recorded per cell and the sweep continues. The
// combined CSV holds one row per (value, seed, step).
SweepResult run_sweep(const ExperimentConfig& cfg, const std::string& axis);

// report command: renders report.csv and SVG line plots (raw plus
// window-10 smoothed curves) from a finished run directory.
void render_report(const std::filesystem::path& run_dir);

}  // namespace grpolab
