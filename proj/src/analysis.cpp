#include "grpolab/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include "grpolab/errors.hpp"
#include "grpolab/rng.hpp"

namespace grpolab {

namespace {

constexpr double kSmallGradFloor = 1e-7;

void check_mc_args(double gamma, int group_size, std::int64_t trials) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) {
    throw ConfigError("gamma must lie in [0, 1]");
  }
  if (group_size < 2) {
    throw ConfigError("group_size must be at least 2");
  }
  if (trials < 2) {
    throw ConfigError("trials must be at least 2");
  }
}

}  // namespace

AdvantageMc mc_expected_advantage(double gamma, int group_size,
                                  std::int64_t trials, std::uint64_t seed) {
  check_mc_args(gamma, group_size, trials);
  auto rng = derive_rng(seed, {stream::kMc, 0});
  std::vector<double> rewards(static_cast<std::size_t>(group_size));
  long double sum = 0.0L;
  long double sumsq = 0.0L;
  for (std::int64_t t = 0; t < trials; ++t) {
    for (auto& r : rewards) r = uniform01(rng) < gamma ? 1.0 : 0.0;
    const AdvantageGroup adv = compute_group_advantages(rewards);
    const double x = adv.advantages[0];
    sum += x;
    sumsq += static_cast<long double>(x) * x;
  }
  AdvantageMc out;
  out.trials = trials;
  out.mean = static_cast<double>(sum / trials);
  const long double var =
      (sumsq - sum * sum / trials) / static_cast<long double>(trials - 1);
  out.se = std::sqrt(std::max(0.0, static_cast<double>(var)) /
                     static_cast<double>(trials));
  return out;
}

BiasEstimate mc_gradient_bias(const PolicyParams& pi_theta,
                              const PolicyParams& pi_old, double gamma,
                              int group_size, double eps_clip,
                              std::int64_t trials, std::uint64_t seed,
                              LossNorm loss_norm, double tau) {
  check_mc_args(gamma, group_size, trials);
  if (pi_theta.grammar() != pi_old.grammar()) {
    throw ConfigError("bias estimate needs matching grammars");
  }
  if (!(eps_clip > 0.0 && eps_clip < 1.0)) {
    throw ConfigError("eps_clip must lie in (0, 1)");
  }
  if (!(tau > 0.0)) {
    throw ConfigError("temperature must be positive");
  }

  TrainConfig clipped_cfg;
  clipped_cfg.eps_clip = eps_clip;
  clipped_cfg.temperature = tau;
  clipped_cfg.loss_norm = loss_norm;
  clipped_cfg.clip_mode = ClipMode::kStandard;
  TrainConfig free_cfg = clipped_cfg;
  free_cfg.clip_mode = ClipMode::kLossDisabled;

  const std::size_t n = pi_theta.table().size();
  BiasEstimate out;
  out.trials = trials;
  out.group_size = group_size;
  out.gamma = gamma;
  out.clipped_mean.assign(n, 0.0);
  out.clipped_se.assign(n, 0.0);
  out.unclipped_mean.assign(n, 0.0);
  out.unclipped_se.assign(n, 0.0);

  // Welford running moments per coordinate.
  std::vector<double> clip_m2(n, 0.0), free_m2(n, 0.0);

  auto rng = derive_rng(seed, {stream::kMc, 1});
  std::vector<Rollout> group(static_cast<std::size_t>(group_size));
  std::vector<double> rewards(static_cast<std::size_t>(group_size));
  GradientAccumulator clip_acc, free_acc;
  for (std::int64_t t = 0; t < trials; ++t) {
    for (auto& rollout : group) {
      rollout.seq = pi_old.sample_sequence(0, tau, rng);
    }
    for (std::size_t k = 0; k < rewards.size(); ++k) {
      rewards[k] = uniform01(rng) < gamma ? 1.0 : 0.0;
      group[k].reward = rewards[k];
    }
    const AdvantageGroup adv = compute_group_advantages(rewards);
    for (std::size_t k = 0; k < group.size(); ++k) {
      group[k].advantage = adv.advantages[k];
    }
    clip_acc.reset(n);
    free_acc.reset(n);
    accumulate_grpo_gradient(pi_theta, group, clipped_cfg, clip_acc);
    accumulate_grpo_gradient(pi_theta, group, free_cfg, free_acc);
    const double count = static_cast<double>(t + 1);
    for (std::size_t i = 0; i < n; ++i) {
      double delta = clip_acc.grad[i] - out.clipped_mean[i];
      out.clipped_mean[i] += delta / count;
      clip_m2[i] += delta * (clip_acc.grad[i] - out.clipped_mean[i]);
      delta = free_acc.grad[i] - out.unclipped_mean[i];
      out.unclipped_mean[i] += delta / count;
      free_m2[i] += delta * (free_acc.grad[i] - out.unclipped_mean[i]);
    }
  }
  const double denom = static_cast<double>(trials) *
                       static_cast<double>(trials - 1);
  for (std::size_t i = 0; i < n; ++i) {
    out.clipped_se[i] = std::sqrt(clip_m2[i] / denom);
    out.unclipped_se[i] = std::sqrt(free_m2[i] / denom);
  }
  return out;
}

PolicyParams two_token_scenario(double p_pat) {
  if (!(p_pat > 0.0 && p_pat < 1.0)) {
    throw ConfigError("p_pat must lie strictly inside (0, 1)");
  }
  Grammar g;
  g.num_classes = 1;
  g.seq_len = 3;
  g.num_fillers = 1;
  g.num_answers = 1;
  PolicyParams params = PolicyParams::masked_uniform(g);
  params.logit(0, 0, 0, Grammar::kPat) = std::log(p_pat);
  params.logit(0, 0, 0, Grammar::kLang) = std::log(1.0 - p_pat);
  return params;
}

double mean_token_probability(const PolicyParams& params,
                              std::span<const TokenSequence> rollouts,
                              double tau) {
  if (rollouts.empty()) return 0.0;
  double total = 0.0;
  for (const auto& seq : rollouts) {
    const std::vector<double> probs = params.sequence_token_probs(seq, tau);
    double s = 0.0;
    for (double p : probs) s += p;
    total += s / static_cast<double>(probs.size());
  }
  return total / static_cast<double>(rollouts.size());
}

double avg_token_probability(
    std::span<const PolicyParams* const> params_per_update,
    std::span<const std::span<const TokenSequence>> minibatches, double tau) {
  if (params_per_update.size() != minibatches.size()) {
    throw ConfigError("one parameter snapshot per minibatch required");
  }
  if (params_per_update.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < minibatches.size(); ++i) {
    total += mean_token_probability(*params_per_update[i], minibatches[i], tau);
  }
  return total / static_cast<double>(minibatches.size());
}

const char* FlowTable::cell_name(int id) {
  switch (id) {
    case kPatToPat: return "pattern->pattern";
    case kPatToLang: return "pattern->lang";
    case kLangToPat: return "lang->pattern";
    case kLangToLang: return "lang->lang";
    default: return "unknown";
  }
}

FlowTable strategy_flow(const EvalReport& before, const EvalReport& after) {
  if (before.classes.size() != after.classes.size()) {
    throw ConfigError("flow table needs the same eval classes on both sides");
  }
  FlowTable table;
  table.total_classes = static_cast<int>(before.classes.size());
  table.accuracy_before = before.accuracy;
  table.accuracy_after = after.accuracy;
  for (std::size_t i = 0; i < before.classes.size(); ++i) {
    const ClassOutcome& b = before.classes[i];
    const ClassOutcome& a = after.classes[i];
    if (b.prompt_class != a.prompt_class) {
      throw ConfigError("flow table needs the same eval classes on both sides");
    }
    const int id = (b.majority_pattern ? 0 : 2) + (a.majority_pattern ? 0 : 1);
    FlowCell& cell = table.cells[static_cast<std::size_t>(id)];
    cell.count += 1;
    cell.acc_before += b.mean_correct;
    cell.acc_after += a.mean_correct;
    const std::int64_t delta = (a.majority_correct ? 1 : 0) -
                               (b.majority_correct ? 1 : 0);
    cell.net_correct_delta += delta;
    table.total_net_delta += delta;
  }
  for (FlowCell& cell : table.cells) {
    if (cell.count > 0) {
      cell.acc_before /= cell.count;
      cell.acc_after /= cell.count;
    }
  }
  return table;
}

ContributionReport partial_contribution(const FlowTable& table) {
  ContributionReport report;
  report.denominator = table.total_net_delta;
  if (table.total_net_delta == 0) {
    report.no_net_change = true;
    return report;
  }
  for (int id = 0; id < 4; ++id) {
    report.contribution[static_cast<std::size_t>(id)] =
        static_cast<double>(table.cells[static_cast<std::size_t>(id)]
                                .net_correct_delta) /
        static_cast<double>(table.total_net_delta);
  }
  return report;
}

FdReport finite_difference_check(const PolicyParams& params,
                                 std::span<const Rollout> minibatch,
                                 const TrainConfig& cfg, double h,
                                 double exclusion_band) {
  if (!(h > 0.0)) throw ConfigError("finite-difference step must be positive");
  if (!(exclusion_band >= 0.0)) {
    throw ConfigError("exclusion band must be nonnegative");
  }
  if (cfg.kl_lambda != 0.0) {
    throw ConfigError("finite-difference check covers the kl_lambda == 0 path");
  }
  const Grammar& g = params.grammar();
  const double lo = 1.0 - cfg.eps_clip;
  const double hi = 1.0 + cfg.eps_clip;
  const bool gated = cfg.clip_mode != ClipMode::kLossDisabled;

  FdReport report;
  TokenMask mask(minibatch.size());
  std::set<std::size_t> coords;
  for (std::size_t r = 0; r < minibatch.size(); ++r) {
    const Rollout& rollout = minibatch[r];
    const auto& seq = rollout.seq;
    mask[r].assign(seq.tokens.size(), 0);
    if (rollout.advantage == 0.0) continue;
    report.tokens_total += static_cast<std::int64_t>(seq.tokens.size());
    const std::vector<double> probs =
        params.sequence_token_probs(seq, cfg.temperature);
    for (std::size_t pos = 0; pos < seq.tokens.size(); ++pos) {
      if (gated) {
        const double rho = probs[pos] / seq.per_token_probs[pos];
        if (std::abs(rho - lo) <= exclusion_band ||
            std::abs(rho - hi) <= exclusion_band) {
          mask[r][pos] = 1;
          report.tokens_excluded += 1;
          continue;
        }
      }
      const int mode = pos == 0 ? 0 : g.mode_state(seq.tokens[0]);
      const auto [first, last] = g.support(static_cast<int>(pos));
      for (int v = first; v < last; ++v) {
        coords.insert(params.index(seq.prompt_class, static_cast<int>(pos),
                                   mode, v));
      }
    }
  }
  if (report.tokens_total > 0 &&
      report.tokens_excluded == report.tokens_total) {
    report.inconclusive = true;
    return report;
  }

  GradientAccumulator acc;
  acc.reset(params.table().size());
  accumulate_grpo_gradient(params, minibatch, cfg, acc, &mask);

  PolicyParams probe = params;
  for (std::size_t idx : coords) {
    const double saved = probe.table()[idx];
    probe.table()[idx] = saved + h;
    const double up = surrogate_value(probe, minibatch, cfg, &mask);
    probe.table()[idx] = saved - h;
    const double down = surrogate_value(probe, minibatch, cfg, &mask);
    probe.table()[idx] = saved;
    const double fd = (up - down) / (2.0 * h);
    const double analytic = acc.grad[idx];
    const double abs_err = std::abs(analytic - fd);
    report.max_abs_err = std::max(report.max_abs_err, abs_err);
    report.coords_checked += 1;
    const double scale = std::max(std::abs(analytic), std::abs(fd));
    if (scale < kSmallGradFloor) {
      report.coords_skipped_small += 1;
    } else {
      report.max_rel_err = std::max(report.max_rel_err, abs_err / scale);
    }
  }
  return report;
}

std::vector<double> moving_average(const std::vector<double>& series,
                                   int window) {
  if (window < 1) throw ConfigError("moving-average window must be positive");
  std::vector<double> out(series.size());
  double running = 0.0;
  for (std::size_t i = 0; i < series.size(); ++i) {
    running += series[i];
    if (i >= static_cast<std::size_t>(window)) {
      running -= series[i - static_cast<std::size_t>(window)];
    }
    const std::size_t n = std::min<std::size_t>(
        i + 1, static_cast<std::size_t>(window));
    out[i] = running / static_cast<double>(n);
  }
  return out;
}

}  // namespace grpolab
