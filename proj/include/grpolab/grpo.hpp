#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "grpolab/policy.hpp"
#include "grpolab/reward.hpp"
#include "grpolab/task.hpp"

namespace grpolab {

enum class ClipMode {
  kStandard,
  kLossDisabled,           // ratio * advantage everywhere, no gating
  kBatchMatchedMinibatch,  // mini_batch grows to one update per phase
  kBatchMatchedRollout,    // rollout_batch shrinks to one update per phase
};

enum class LossNorm { kPerTokenMean, kPerTokenSum };

const char* clip_mode_name(ClipMode mode);
const char* loss_norm_name(LossNorm norm);

struct TrainConfig {
  int group_size = 16;     // rollouts per prompt (G)
  int rollout_batch = 256; // prompts per phase (B_r)
  int mini_batch = 128;    // rollouts per gradient update (B_m)
  double eps_clip = 0.1;
  double kl_lambda = 0.0;  // KL-to-reference weight; kept at 0 here
  double learning_rate = 150.0;
  double temperature = 1.0;
  ClipMode clip_mode = ClipMode::kStandard;
  LossNorm loss_norm = LossNorm::kPerTokenMean;
  int steps = 300;
  std::uint64_t seed = 1;
  int eval_cadence = 10;   // steps between EvalReports; 0 disables
  int eval_samples = 256;  // rollouts per eval class

  // batch_matched modes trade batch shape for a single update per phase.
  TrainConfig effective() const;
  // Updates per phase, G * B_r / B_m, for the effective shape.
  int updates_per_phase() const;

  void validate() const;  // throws ConfigError
};

// One rollout with its reward and group-relative advantage.
struct Rollout {
  TokenSequence seq;
  double reward = 0.0;
  double advantage = 0.0;
};

struct AdvantageGroup {
  std::vector<double> advantages;
  double mean = 0.0;
  double sigma = 0.0;      // population standard deviation
  bool degenerate = false; // sigma == 0: advantages all zero
};

// (r_i - mean) / sigma with population sigma; all zeros when sigma == 0.
AdvantageGroup compute_group_advantages(const std::vector<double>& rewards);

// Per-token clipped surrogate: value = min(rho * adv, clip(rho) * adv).
// clipped means the gradient is zero: the ratio sits at or beyond the
// boundary on the side its advantage keeps pushing toward.
struct TokenObjective {
  double value = 0.0;
  bool clipped = false;
  bool upper = false;  // which boundary did the clipping
};
TokenObjective clipped_token_objective(double rho, double advantage,
                                       double eps_clip);

// Dense gradient table congruent to the policy logits, plus token counters.
struct GradientAccumulator {
  std::vector<double> grad;
  std::int64_t tokens = 0;
  std::int64_t clipped_upper = 0;
  std::int64_t clipped_lower = 0;
  double token_prob_sum = 0.0;  // sum over rollouts of mean token prob

  void reset(std::size_t table_size);
};

// Marks tokens excluded from the objective; used by the finite-difference
// checker to cut out clip-boundary kinks. excluded[r][t] gates rollout r,
// position t.
using TokenMask = std::vector<std::vector<char>>;

// Accumulates the gradient of the clipped surrogate over a minibatch, at
// params against the sampling probabilities stored in each rollout.
// Deterministic accumulation order: rollouts in span order, tokens left to
// right.
void accumulate_grpo_gradient(const PolicyParams& params,
                              std::span<const Rollout> minibatch,
                              const TrainConfig& cfg,
                              GradientAccumulator& acc,
                              const TokenMask* exclude = nullptr);

// The surrogate objective value the gradient above differentiates.
double surrogate_value(const PolicyParams& params,
                       std::span<const Rollout> minibatch,
                       const TrainConfig& cfg,
                       const TokenMask* exclude = nullptr);

struct MetricsRecord {
  int step = 0;
  double reward_mean = 0.0;
  double clip_upper_frac = 0.0;
  double clip_lower_frac = 0.0;
  double grad_norm = 0.0;
  double avg_token_prob = 0.0;
  std::optional<double> accuracy;      // eval cadence only
  std::optional<double> pattern_freq;  // eval cadence only
};

struct TrainHooks {
  std::function<void(const MetricsRecord&)> on_metrics;
  std::function<void(const EvalReport&)> on_eval;
  std::function<void(int step, const PolicyParams&)> on_checkpoint;
};

struct TrainResult {
  PolicyParams params;
  std::vector<MetricsRecord> metrics;
  std::vector<EvalReport> evals;  // step 0 first, final step last
  int steps_completed = 0;
};

// On-policy phases: snapshot, sample group rollouts, score, advantage,
// then M minibatch gradient-ascent updates on whole prompt groups.
// Throws DivergenceError if any logit goes non-finite.
TrainResult run_training(PolicyParams params, const TaskSpec& tasks,
                         const RewardSpec& reward, const TrainConfig& cfg,
                         const TrainHooks& hooks = {});

}  // namespace grpolab
