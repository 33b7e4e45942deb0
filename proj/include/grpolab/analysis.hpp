#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "grpolab/grpo.hpp"
#include "grpolab/policy.hpp"
#include "grpolab/task.hpp"

namespace grpolab {

// ----- zero-advantage Monte Carlo ----- //

struct AdvantageMc {
  double mean = 0.0;
  double se = 0.0;
  std::int64_t trials = 0;
};

// Mean advantage of a single designated rollout across i.i.d. Bernoulli
// reward groups. Rollouts are exchangeable within a group and group
// advantages sum to zero identically, so the designated-rollout mean is
// the informative estimator of E[advantage].
AdvantageMc mc_expected_advantage(double gamma, int group_size,
                                  std::int64_t trials, std::uint64_t seed);

// ----- clipped-gradient bias Monte Carlo ----- //

// Per-coordinate mean and standard error of the per-group gradient, for
// the clipped and the ungated objective over identical reward draws.
struct BiasEstimate {
  std::int64_t trials = 0;
  int group_size = 0;
  double gamma = 0.0;
  std::vector<double> clipped_mean, clipped_se;
  std::vector<double> unclipped_mean, unclipped_se;
};

// Groups are sampled fresh from pi_old and scored at pi_theta, mirroring a
// policy displaced from its snapshot mid-phase.
BiasEstimate mc_gradient_bias(const PolicyParams& pi_theta,
                              const PolicyParams& pi_old, double gamma,
                              int group_size, double eps_clip,
                              std::int64_t trials, std::uint64_t seed,
                              LossNorm loss_norm = LossNorm::kPerTokenMean,
                              double tau = 1.0);

// Single-class, single-filler policy whose position-0 row carries
// {PAT: p_pat, LANG: 1 - p_pat}; the bias scenarios' canvas.
PolicyParams two_token_scenario(double p_pat);

// ----- token probability trend ----- //

// Mean over rollouts of the within-rollout mean token probability.
double mean_token_probability(const PolicyParams& params,
                              std::span<const TokenSequence> rollouts,
                              double tau = 1.0);

// Phase-level average across updates: each minibatch evaluated under the
// parameters its update saw.
double avg_token_probability(
    std::span<const PolicyParams* const> params_per_update,
    std::span<const std::span<const TokenSequence>> minibatches,
    double tau = 1.0);

// ----- strategy flow and contribution decomposition ----- //

enum FlowCellId { kPatToPat = 0, kPatToLang = 1, kLangToPat = 2, kLangToLang = 3 };

struct FlowCell {
  int count = 0;
  double acc_before = 0.0;  // mean per-class accuracy of members, before
  double acc_after = 0.0;
  std::int64_t net_correct_delta = 0;  // majority-correct flips, after - before
};

struct FlowTable {
  std::array<FlowCell, 4> cells;
  int total_classes = 0;
  std::int64_t total_net_delta = 0;
  double accuracy_before = 0.0;
  double accuracy_after = 0.0;

  static const char* cell_name(int id);
};

// 2x2 partition of eval classes by majority pattern use before vs after.
// Both reports must cover the same classes.
FlowTable strategy_flow(const EvalReport& before, const EvalReport& after);

struct ContributionReport {
  std::array<double, 4> contribution{};
  std::int64_t denominator = 0;
  bool no_net_change = false;  // denominator was zero
};

// Share of the net correctness change carried by each flow cell; shares
// sum to one whenever there is any net change.
ContributionReport partial_contribution(const FlowTable& table);

// ----- gradient oracle ----- //

struct FdReport {
  double max_rel_err = 0.0;
  double max_abs_err = 0.0;
  std::int64_t coords_checked = 0;
  std::int64_t coords_skipped_small = 0;
  std::int64_t tokens_excluded = 0;
  std::int64_t tokens_total = 0;
  bool inconclusive = false;  // every contributing token sat on a boundary
};

// Central-difference check of the clipped-surrogate gradient. Tokens whose
// ratio lies within exclusion_band of a clip boundary are cut from both
// sides of the comparison; coordinates where both gradients are below the
// small-gradient floor are compared absolutely and not ranked by relative
// error.
FdReport finite_difference_check(const PolicyParams& params,
                                 std::span<const Rollout> minibatch,
                                 const TrainConfig& cfg, double h = 1e-5,
                                 double exclusion_band = 1e-4);

// Trailing moving average used by report plots.
std::vector<double> moving_average(const std::vector<double>& series,
                                   int window);

}  // namespace grpolab
