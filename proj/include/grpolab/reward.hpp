#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "grpolab/policy.hpp"
#include "grpolab/task.hpp"

namespace grpolab {

// Pseudo-labels produced by majority voting. fallback_classes lists classes
// where every sample was unparseable and the smallest answer token was
// assigned by convention.
struct LabelSet {
  std::map<int, int> labels;  // class -> answer token index
  std::vector<int> fallback_classes;

  void save_file(const std::string& path) const;
  static LabelSet load_file(const std::string& path);
};

enum class RewardKind {
  kGroundTruth,
  kMajorityVote,
  kFormat,
  kRandom,
  kIncorrectLabel,
  kPattern,
  kNoRepetition,
  kCompound,
};

const char* reward_kind_name(RewardKind kind);

// Tagged union over the reward spectrum. Compound applies a base reward
// and zeroes it for pattern-using rollouts; bases cannot nest further.
struct RewardSpec {
  RewardKind kind = RewardKind::kGroundTruth;
  double gamma = 0.5;                // kRandom: Bernoulli success rate
  int max_run = 10;                  // kNoRepetition: longest tolerated run
  LabelSet labels;                   // kMajorityVote, kIncorrectLabel
  std::vector<int> active_classes;   // kIncorrectLabel
  std::shared_ptr<RewardSpec> base;  // kCompound
  bool forbid_pattern = true;        // kCompound

  static RewardSpec ground_truth() { return {}; }
  static RewardSpec format();
  static RewardSpec random(double gamma);
  static RewardSpec pattern();
  static RewardSpec no_repetition(int max_run = 10);
  static RewardSpec majority_vote(LabelSet labels);
  static RewardSpec incorrect_label(LabelSet labels,
                                    std::vector<int> active_classes);
  static RewardSpec compound(RewardSpec base, bool forbid_pattern = true);

  // Classes this reward can score; training samples prompts from here.
  std::vector<int> prompt_domain(const TaskSpec& tasks) const;

  void validate(const TaskSpec& tasks) const;  // throws ConfigError
};

// Binary reward for one parsed rollout. Only kRandom consumes the engine;
// it must be a stream dedicated to this rollout.
int score_reward(const RewardSpec& spec, const ParsedOutcome& parsed,
                 int prompt_class, std::mt19937_64& rng);

// Majority vote over n_samples rollouts per train class, unparseable
// samples ignored; ties resolve to the smallest answer index.
LabelSet majority_vote_labels(const PolicyParams& params,
                              const TaskSpec& tasks, int n_samples,
                              std::uint64_t seed, double tau = 1.0);

// Classes whose pseudo-label disagrees with the true answer, ascending.
// Throws ConfigError when no label is incorrect.
std::vector<int> incorrect_label_subset(const LabelSet& labels,
                                        const TaskSpec& tasks);

}  // namespace grpolab
