#include "grpolab/selftest.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <optional>
#include <random>
#include <sstream>

#include "grpolab/analysis.hpp"
#include "grpolab/config.hpp"
#include "grpolab/errors.hpp"
#include "grpolab/experiment.hpp"
#include "grpolab/grpo.hpp"
#include "grpolab/rng.hpp"

namespace grpolab {

namespace {

// Pinned acceptance tolerances and scales.
constexpr double kExactTol = 1e-12;
constexpr double kFdTol = 1e-6;
constexpr double kFdStep = 1e-5;
constexpr double kFdBand = 1e-4;
constexpr std::int64_t kMcTrials = 100000;
constexpr double kZeroSe = 3.0;   // consistency with zero
constexpr double kSignSe = 5.0;   // nonzero detection
constexpr double kDominantOld = 0.85;
constexpr double kDominantTheta = 0.60;
constexpr double kBiasEps = 0.2;
constexpr double kLowProbOld = 0.02;
constexpr double kLowProbTheta = 0.03;
constexpr double kPatternMedianTarget = 0.90;
constexpr double kPatternFastTarget = 0.99;
constexpr int kPatternFastBudget = 20;
constexpr int kFullSteps = 300;
constexpr std::uint64_t kRunSeeds[] = {1, 2, 3, 4, 5};

std::string fmt(const char* spec, double a, double b = 0.0, double c = 0.0) {
  char buf[160];
  std::snprintf(buf, sizeof buf, spec, a, b, c);
  return std::string(buf);
}

double median(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2]
                    : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

struct SelfTestContext {
  std::filesystem::path work_dir;
  ExperimentConfig cfg;   // repo defaults
  TaskSpec tasks;
  PolicyParams initial;
  std::optional<BiasEstimate> dominant;
};

const BiasEstimate& dominant_bias(SelfTestContext& ctx) {
  if (!ctx.dominant) {
    ctx.dominant = mc_gradient_bias(
        two_token_scenario(kDominantTheta), two_token_scenario(kDominantOld),
        0.5, 16, kBiasEps, kMcTrials, 7001);
  }
  return *ctx.dominant;
}

TrainResult train_with(const SelfTestContext& ctx, const RewardSpec& reward,
                       std::uint64_t seed, int steps, int eval_cadence,
                       ClipMode mode) {
  TrainConfig tc = ctx.cfg.train;
  tc.seed = seed;
  tc.steps = steps;
  tc.eval_cadence = eval_cadence;
  tc.clip_mode = mode;
  return run_training(ctx.initial, ctx.tasks, reward, tc);
}

// 1. Group advantages: exact zero-sum when sigma > 0, exact zeros when
// sigma = 0, exhaustively over all binary reward lists.
bool advantage_exactness(SelfTestContext&, std::string& detail) {
  std::int64_t lists = 0;
  for (int G : {2, 4, 8, 16}) {
    std::vector<double> rewards(static_cast<std::size_t>(G));
    for (std::uint64_t bits = 0; bits < (1ull << G); ++bits) {
      for (int k = 0; k < G; ++k) rewards[k] = (bits >> k) & 1 ? 1.0 : 0.0;
      const AdvantageGroup adv = compute_group_advantages(rewards);
      lists += 1;
      if (adv.degenerate) {
        for (double a : adv.advantages) {
          if (a != 0.0) {
            detail = "sigma=0 group produced a nonzero advantage";
            return false;
          }
        }
        continue;
      }
      double sum = 0.0;
      for (double a : adv.advantages) sum += a;
      if (std::abs(sum) > kExactTol) {
        detail = fmt("advantage sum %.3e exceeds %.1e at G=%g", sum, kExactTol,
                     G);
        return false;
      }
    }
  }
  detail = "checked " + std::to_string(lists) +
           " reward lists over G in {2,4,8,16}";
  return true;
}

// 2. E[advantage] = 0 under Bernoulli rewards at every gamma.
bool zero_expected_advantage(SelfTestContext&, std::string& detail) {
  std::ostringstream out;
  for (double gamma : {0.001, 0.3, 0.5, 0.7}) {
    const AdvantageMc mc = mc_expected_advantage(gamma, 16, kMcTrials, 2024);
    const bool ok = mc.se > 0.0 ? std::abs(mc.mean) <= kZeroSe * mc.se
                                : mc.mean == 0.0;
    out << fmt("gamma=%g mean=%.2e se=%.2e; ", gamma, mc.mean, mc.se);
    if (!ok) {
      detail = out.str() + "mean exceeds 3 SE";
      return false;
    }
  }
  detail = out.str();
  return true;
}

// 3. Random gamma=0 training is a bit-exact no-op on the parameters.
bool gamma_zero_noop(SelfTestContext& ctx, std::string& detail) {
  const TrainResult result =
      train_with(ctx, RewardSpec::random(0.0), 1, 100, 0,
                 ClipMode::kStandard);
  const auto& before = ctx.initial.table();
  const auto& after = result.params.table();
  const bool same =
      before.size() == after.size() &&
      std::memcmp(before.data(), after.data(),
                  before.size() * sizeof(double)) == 0;
  detail = same ? "100 steps left every logit bit-identical"
                : "parameter bits changed under gamma=0";
  return same;
}

// 4. Analytic gradient vs central finite differences, ratio-one and
// perturbed-ratio minibatches, away from clip boundaries.
bool gradient_correctness(SelfTestContext& ctx, std::string& detail) {
  double worst = 0.0;
  for (std::uint64_t seed : {11ull, 12ull, 13ull}) {
    auto rng = derive_rng(seed, {stream::kMc, 3});
    const int G = 4;
    std::vector<Rollout> minibatch;
    for (int j = 0; j < 8; ++j) {
      const int cls = static_cast<int>(rng() %
                                       static_cast<std::uint64_t>(
                                           ctx.cfg.grammar.num_classes));
      std::vector<double> rewards(G);
      const std::size_t base = minibatch.size();
      for (int k = 0; k < G; ++k) {
        Rollout ro;
        ro.seq = ctx.initial.sample_sequence(cls, 1.0, rng);
        ro.reward =
            parse_sequence(ctx.tasks, ro.seq).correct ? 1.0 : 0.0;
        rewards[k] = ro.reward;
        minibatch.push_back(std::move(ro));
      }
      const AdvantageGroup adv = compute_group_advantages(rewards);
      for (int k = 0; k < G; ++k) {
        minibatch[base + k].advantage = adv.advantages[k];
        minibatch[base + k].reward = rewards[k];
      }
    }
    TrainConfig tc = ctx.cfg.train;
    for (bool perturb : {false, true}) {
      PolicyParams params = ctx.initial;
      if (perturb) {
        auto& table = params.table();
        for (double& v : table) v += (uniform01(rng) - 0.5) * 0.6;
      }
      for (LossNorm norm : {LossNorm::kPerTokenMean, LossNorm::kPerTokenSum}) {
        tc.loss_norm = norm;
        const FdReport report = finite_difference_check(
            params, minibatch, tc, kFdStep, kFdBand);
        if (report.inconclusive || report.coords_checked == 0) {
          detail = "finite-difference check had no usable coordinates";
          return false;
        }
        worst = std::max(worst, report.max_rel_err);
        if (report.max_rel_err >= kFdTol) {
          detail = fmt("max relative error %.2e at tolerance %.0e",
                       report.max_rel_err, kFdTol);
          return false;
        }
      }
    }
  }
  detail = fmt("max relative error %.2e across 3 seeds (both ratio shapes, "
               "both norms)",
               worst);
  return true;
}

// 5. Without clip gating the expected gradient under random rewards is zero
// on every coordinate.
bool unclipped_zero_bias(SelfTestContext& ctx, std::string& detail) {
  const BiasEstimate& est = dominant_bias(ctx);
  double worst_z = 0.0;
  for (std::size_t i = 0; i < est.unclipped_mean.size(); ++i) {
    const double mean = est.unclipped_mean[i];
    const double se = est.unclipped_se[i];
    if (se == 0.0) {
      if (mean != 0.0) {
        detail = fmt("coordinate %g has zero SE but mean %.2e",
                     static_cast<double>(i), mean);
        return false;
      }
      continue;
    }
    worst_z = std::max(worst_z, std::abs(mean) / se);
  }
  detail = fmt("largest |mean|/SE = %.2f over %g coordinates (limit %g)",
               worst_z, static_cast<double>(est.unclipped_mean.size()),
               kZeroSe);
  return worst_z <= kZeroSe;
}

// 6. Standard clipping biases the dominant-token coordinate positive and
// the low-probability construction negative, both at 5 SE.
bool clipped_nonzero_bias(SelfTestContext& ctx, std::string& detail) {
  const BiasEstimate& dom = dominant_bias(ctx);
  const PolicyParams probe = two_token_scenario(0.5);
  const std::size_t pat = probe.index(0, 0, 0, Grammar::kPat);
  const double dom_z =
      dom.clipped_se[pat] > 0.0 ? dom.clipped_mean[pat] / dom.clipped_se[pat]
                                : 0.0;

  const BiasEstimate low = mc_gradient_bias(
      two_token_scenario(kLowProbTheta), two_token_scenario(kLowProbOld), 0.5,
      16, kBiasEps, kMcTrials, 7002);
  const double low_z =
      low.clipped_se[pat] > 0.0 ? low.clipped_mean[pat] / low.clipped_se[pat]
                                : 0.0;
  detail = fmt("dominant z=%+.1f, low-probability z=%+.1f (need +/-%g)",
               dom_z, low_z, kSignSe);
  return dom_z >= kSignSe && low_z <= -kSignSe;
}

// 7. Random rewards with standard clipping amplify the pattern mode while
// every no-clipping mode stays comparatively flat.
bool clipping_drift_mechanism(SelfTestContext& ctx, std::string& detail) {
  const RewardSpec reward = RewardSpec::random(0.5);
  std::vector<double> initial, std_final;
  std::vector<double> drift_loss_disabled, drift_bm_mini, drift_bm_roll;
  bool clip_free = true;
  for (std::uint64_t seed : kRunSeeds) {
    const TrainResult std_run = train_with(ctx, reward, seed, kFullSteps,
                                           kFullSteps, ClipMode::kStandard);
    initial.push_back(std_run.evals.front().pattern_frequency);
    std_final.push_back(std_run.evals.back().pattern_frequency);
    const double init = std_run.evals.front().pattern_frequency;

    const TrainResult ld = train_with(ctx, reward, seed, kFullSteps,
                                      kFullSteps, ClipMode::kLossDisabled);
    drift_loss_disabled.push_back(
        std::abs(ld.evals.back().pattern_frequency - init));

    const TrainResult bm = train_with(ctx, reward, seed, kFullSteps,
                                      kFullSteps,
                                      ClipMode::kBatchMatchedMinibatch);
    drift_bm_mini.push_back(
        std::abs(bm.evals.back().pattern_frequency - init));
    const TrainResult br = train_with(ctx, reward, seed, kFullSteps,
                                      kFullSteps,
                                      ClipMode::kBatchMatchedRollout);
    drift_bm_roll.push_back(
        std::abs(br.evals.back().pattern_frequency - init));
    for (const TrainResult* run : {&bm, &br}) {
      for (const MetricsRecord& rec : run->metrics) {
        if (rec.clip_upper_frac != 0.0 || rec.clip_lower_frac != 0.0) {
          clip_free = false;
        }
      }
    }
  }
  const double med_final = median(std_final);
  const double gain = med_final - median(initial);
  const double d_ld = median(drift_loss_disabled);
  const double d_bm = median(drift_bm_mini);
  const double d_br = median(drift_bm_roll);
  detail = fmt("standard median final=%.3f (gain %.3f); ", med_final, gain) +
           fmt("drift medians loss_disabled=%.3f bm_mini=%.3f bm_roll=%.3f",
               d_ld, d_bm, d_br) +
           (clip_free ? "; batch_matched clip fractions all zero"
                      : "; batch_matched clipping fired");
  return med_final >= kPatternMedianTarget && d_ld < gain && d_bm < gain &&
         d_br < gain && clip_free;
}

// 8. Direct interventions: Pattern reward saturates pattern use within the
// early budget; the pattern-forbidding compound reward pushes it below the
// calibrated initial rate.
bool pattern_interventions(SelfTestContext& ctx, std::string& detail) {
  const TrainResult fast =
      train_with(ctx, RewardSpec::pattern(), 1, kPatternFastBudget,
                 kPatternFastBudget, ClipMode::kStandard);
  const double fast_final = fast.evals.back().pattern_frequency;

  const TrainResult forbid = train_with(
      ctx, RewardSpec::compound(RewardSpec::format(), true), 1, kFullSteps,
      kFullSteps, ClipMode::kStandard);
  const double forbid_initial = forbid.evals.front().pattern_frequency;
  const double forbid_final = forbid.evals.back().pattern_frequency;
  detail = fmt("pattern reward reached %.4f in %g steps; ", fast_final,
               kPatternFastBudget) +
           fmt("forbid-pattern compound moved %.3f -> %.3f", forbid_initial,
               forbid_final);
  return fast_final > kPatternFastTarget && forbid_final < forbid_initial &&
         forbid_final < 0.65;
}

// 9. Calibration hits every behavioral target and the implied accuracy.
bool calibration_fidelity(SelfTestContext& ctx, std::string& detail) {
  const CalibrateResult result = calibrate_with_verification(ctx.cfg, 100000);
  std::ostringstream out;
  for (const TargetCheck& c : result.checks) {
    out << c.name << "=" << fmt("%.4f(target %.4f) ", c.estimate, c.target);
    if (!c.pass) {
      detail = out.str() + "outside 3 SE";
      return false;
    }
  }
  detail = out.str();
  return result.all_pass;
}

// 10. Partial contributions sum to one whenever there is net change, and
// the zero-denominator case reports the marker.
bool contribution_decomposition(SelfTestContext&, std::string& detail) {
  std::mt19937_64 rng(424242);
  int nonzero_tables = 0;
  while (nonzero_tables < 1000) {
    FlowTable table;
    table.total_net_delta = 0;
    for (FlowCell& cell : table.cells) {
      cell.count = static_cast<int>(rng() % 11);
      const int span = 2 * cell.count + 1;
      cell.net_correct_delta = static_cast<int>(rng() % span) - cell.count;
      table.total_net_delta += cell.net_correct_delta;
      table.total_classes += cell.count;
    }
    const ContributionReport report = partial_contribution(table);
    if (table.total_net_delta == 0) {
      if (!report.no_net_change) {
        detail = "zero net change did not produce the marker";
        return false;
      }
      continue;
    }
    nonzero_tables += 1;
    if (report.no_net_change) {
      detail = "marker returned despite nonzero net change";
      return false;
    }
    const double sum = report.contribution[0] + report.contribution[1] +
                       report.contribution[2] + report.contribution[3];
    if (std::abs(sum - 1.0) > kExactTol) {
      detail = fmt("contribution sum %.17g deviates beyond %.0e", sum,
                   kExactTol);
      return false;
    }
  }
  FlowTable flat;
  for (FlowCell& cell : flat.cells) {
    cell.count = 2;
    cell.net_correct_delta = 0;
  }
  flat.total_classes = 8;
  flat.total_net_delta = 0;
  if (!partial_contribution(flat).no_net_change) {
    detail = "constructed zero-denominator table missed the marker";
    return false;
  }
  detail = "1000 nonzero tables sum to 1 within 1e-12; marker verified";
  return true;
}

// 11. Reward informativeness ordering on final accuracy.
bool reward_ordering(SelfTestContext& ctx, std::string& detail) {
  std::vector<double> initial, gt_final, fmt_final;
  for (std::uint64_t seed : kRunSeeds) {
    const TrainResult gt = train_with(ctx, RewardSpec::ground_truth(), seed,
                                      kFullSteps, kFullSteps,
                                      ClipMode::kStandard);
    const TrainResult fm = train_with(ctx, RewardSpec::format(), seed,
                                      kFullSteps, kFullSteps,
                                      ClipMode::kStandard);
    initial.push_back(gt.evals.front().accuracy);
    gt_final.push_back(gt.evals.back().accuracy);
    fmt_final.push_back(fm.evals.back().accuracy);
  }
  const double med_init = median(initial);
  const double med_gt = median(gt_final);
  const double med_fmt = median(fmt_final);
  detail = fmt("median accuracy: ground_truth=%.3f format=%.3f initial=%.3f",
               med_gt, med_fmt, med_init);
  return med_gt >= med_fmt && med_fmt > med_init;
}

// 12. Identical config and seed reproduce the metrics log byte for byte.
bool run_determinism(SelfTestContext& ctx, std::string& detail) {
  ExperimentConfig cfg = ctx.cfg;
  cfg.name = "determinism";
  cfg.reward.kind = RewardKind::kRandom;
  cfg.reward.gamma = 0.5;
  cfg.train.steps = 40;
  cfg.train.eval_cadence = 10;
  cfg.checkpoint_cadence = 20;
  auto read_bytes = [](const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
  };
  run_experiment(cfg, 1, ctx.work_dir / "determinism_a");
  run_experiment(cfg, 1, ctx.work_dir / "determinism_b");
  const std::string a = read_bytes(ctx.work_dir / "determinism_a" /
                                   "metrics.jsonl");
  const std::string b = read_bytes(ctx.work_dir / "determinism_b" /
                                   "metrics.jsonl");
  if (a.empty() || a != b) {
    detail = "metrics.jsonl differs between identical runs";
    return false;
  }
  detail = fmt("metrics logs identical (%g bytes)",
               static_cast<double>(a.size()));
  return true;
}

}  // namespace

SelfTestSummary run_selftest(
    const std::filesystem::path& work_dir,
    const std::function<void(const CriterionResult&)>& progress) {
  SelfTestContext ctx;
  ctx.work_dir = work_dir;
  std::filesystem::create_directories(work_dir);
  ctx.cfg.validate();
  ctx.tasks = ctx.cfg.make_tasks();
  ctx.initial = calibrate_initial_policy(ctx.tasks, ctx.cfg.calibration);

  struct Criterion {
    const char* name;
    bool (*fn)(SelfTestContext&, std::string&);
  };
  const Criterion criteria[] = {
      {"advantage-exactness", advantage_exactness},
      {"zero-expected-advantage", zero_expected_advantage},
      {"gamma-zero-noop", gamma_zero_noop},
      {"gradient-correctness", gradient_correctness},
      {"unclipped-zero-bias", unclipped_zero_bias},
      {"clipped-nonzero-bias", clipped_nonzero_bias},
      {"clipping-drift-mechanism", clipping_drift_mechanism},
      {"pattern-interventions", pattern_interventions},
      {"calibration-fidelity", calibration_fidelity},
      {"contribution-decomposition", contribution_decomposition},
      {"reward-ordering", reward_ordering},
      {"run-determinism", run_determinism},
  };

  SelfTestSummary summary;
  summary.all_pass = true;
  int id = 0;
  for (const Criterion& criterion : criteria) {
    CriterionResult result;
    result.id = ++id;
    result.name = criterion.name;
    const auto start = std::chrono::steady_clock::now();
    try {
      result.pass = criterion.fn(ctx, result.detail);
    } catch (const std::exception& e) {
      result.pass = false;
      result.detail = std::string("exception: ") + e.what();
    }
    result.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
            .count();
    summary.total_seconds += result.seconds;
    summary.all_pass = summary.all_pass && result.pass;
    if (progress) progress(result);
    summary.results.push_back(std::move(result));
  }
  return summary;
}

}  // namespace grpolab
