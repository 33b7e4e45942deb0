#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "grpolab/grammar.hpp"
#include "grpolab/grpo.hpp"
#include "grpolab/reward.hpp"
#include "grpolab/task.hpp"

namespace grpolab {

ClipMode parse_clip_mode(const std::string& name);
LossNorm parse_loss_norm(const std::string& name);
RewardKind parse_reward_kind(const std::string& name);

// Reward selection as written in config files. Label-based rewards point at
// a labels file; when the path is empty the runner votes fresh labels from
// the calibrated policy and persists them next to the run.
struct RewardConfig {
  RewardKind kind = RewardKind::kGroundTruth;
  double gamma = 0.5;
  int max_run = 10;
  std::string labels_file;
  bool forbid_pattern = true;
  std::shared_ptr<RewardConfig> base;
};

// Value lists the sweep command iterates over.
struct SweepAxes {
  std::vector<double> gammas{0.7, 0.5, 0.3, 0.001, 0.0};
  std::vector<std::string> clip_modes{"standard", "loss_disabled",
                                      "batch_matched_minibatch",
                                      "batch_matched_rollout"};
};

// One experiment: grammar, calibration targets, task split, reward, and
// training shape. Loaded from a JSON document; unknown keys anywhere are
// rejected so typos cannot silently fall back to defaults.
struct ExperimentConfig {
  std::string name = "default";
  Grammar grammar{32, 5, 4, 8};
  int train_classes = 24;
  CalibrationTargets calibration;
  RewardConfig reward;
  TrainConfig train;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  SweepAxes sweep;
  std::string output_dir = "runs/default";
  int checkpoint_cadence = 0;   // extra checkpoints every N steps; 0 = endpoints only
  std::string initial_policy;   // existing policy file; empty = calibrate fresh

  static ExperimentConfig from_json_text(const std::string& text);
  static ExperimentConfig load_file(const std::string& path);

  // Canonical rendering: sorted keys, two-space indent, trailing newline.
  // Hashes and the determinism contract are defined over these bytes.
  std::string to_json_text() const;

  void validate() const;  // throws ConfigError
  TaskSpec make_tasks() const;
};

std::uint64_t fnv1a(std::string_view bytes);
std::string hash_hex(std::uint64_t value);

}  // namespace grpolab
