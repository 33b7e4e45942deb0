#pragma once

#include <cstdint>
#include <vector>

#include "grpolab/grammar.hpp"
#include "grpolab/policy.hpp"

namespace grpolab {

// The synthetic prompt set: one true answer token per class, plus a
// disjoint train/eval split over the classes.
struct TaskSpec {
  Grammar grammar;
  std::vector<int> true_answers;  // answer token index per class
  std::vector<int> train_classes;
  std::vector<int> eval_classes;

  // Round-robin answers, first train_count classes train, rest eval.
  static TaskSpec make_default(const Grammar& g, int train_count);

  void validate() const;  // throws ConfigError
};

struct ParsedOutcome {
  static constexpr int kNone = -1;

  bool uses_pattern = false;
  int extracted_answer = kNone;  // answer token index or kNone
  bool parseable = false;
  int max_repeat_run = 0;  // longest identical consecutive filler run
  bool correct = false;
};

// Pure grammar readout of a finished sequence.
ParsedOutcome parse_sequence(const TaskSpec& tasks, const TokenSequence& seq);

// Behavioral rates the initial policy is constructed to hit.
struct CalibrationTargets {
  double pattern_rate = 0.65;
  double acc_given_pattern = 0.609;
  double acc_given_lang = 0.350;
  double parse_rate = 0.789;
  double tolerance = 0.0;  // extra slack allowed by verification checks
};

// Closed-form initial policy: P(PAT) = pattern_rate at position 0, uniform
// fillers, and answer rows built so P(correct | mode) and
// P(parseable | mode) hit the targets exactly. Throws CalibrationError,
// naming the violated bound, when no such policy exists on this grammar.
PolicyParams calibrate_initial_policy(const TaskSpec& tasks,
                                      const CalibrationTargets& targets);

struct ClassOutcome {
  int prompt_class = 0;
  bool majority_pattern = false;  // ties count as pattern-using
  bool majority_correct = false;  // ties count as correct
  double mean_pattern = 0.0;
  double mean_correct = 0.0;
  double mean_parseable = 0.0;
};

struct EvalReport {
  int step = 0;
  int n_samples = 0;  // per class
  double accuracy = 0.0;
  double pattern_frequency = 0.0;
  double parse_rate = 0.0;
  double acc_given_pattern = 0.0;  // 0 when no pattern rollout seen
  double acc_given_lang = 0.0;     // 0 when no lang rollout seen
  std::int64_t pattern_count = 0;
  std::int64_t lang_count = 0;
  std::vector<ClassOutcome> classes;  // eval classes, ascending
};

// Empirical rates over n_samples rollouts per eval class, sampled from
// deterministic per-class streams derived from seed.
EvalReport evaluate_policy(const PolicyParams& params, const TaskSpec& tasks,
                           int n_samples, std::uint64_t seed,
                           double tau = 1.0);

}  // namespace grpolab
