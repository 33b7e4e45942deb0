#include "grpolab/grpo.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "grpolab/errors.hpp"
#include "grpolab/rng.hpp"

namespace grpolab {

const char* clip_mode_name(ClipMode mode) {
  switch (mode) {
    case ClipMode::kStandard: return "standard";
    case ClipMode::kLossDisabled: return "loss_disabled";
    case ClipMode::kBatchMatchedMinibatch: return "batch_matched_minibatch";
    case ClipMode::kBatchMatchedRollout: return "batch_matched_rollout";
  }
  return "?";
}

const char* loss_norm_name(LossNorm norm) {
  return norm == LossNorm::kPerTokenMean ? "per_token_mean" : "per_token_sum";
}

TrainConfig TrainConfig::effective() const {
  TrainConfig cfg = *this;
  if (clip_mode == ClipMode::kBatchMatchedMinibatch) {
    cfg.mini_batch = group_size * rollout_batch;
  } else if (clip_mode == ClipMode::kBatchMatchedRollout) {
    if (mini_batch % group_size != 0)
      throw ConfigError("train: mini_batch must be a multiple of group_size");
    cfg.rollout_batch = mini_batch / group_size;
  }
  return cfg;
}

int TrainConfig::updates_per_phase() const {
  const TrainConfig cfg = effective();
  return cfg.group_size * cfg.rollout_batch / cfg.mini_batch;
}

void TrainConfig::validate() const {
  if (group_size < 2) throw ConfigError("train: group_size must be >= 2");
  if (rollout_batch < 1) throw ConfigError("train: rollout_batch must be >= 1");
  if (mini_batch < 1) throw ConfigError("train: mini_batch must be >= 1");
  const TrainConfig cfg = effective();
  if (cfg.mini_batch % cfg.group_size != 0)
    throw ConfigError("train: mini_batch must be a multiple of group_size");
  if ((cfg.group_size * cfg.rollout_batch) % cfg.mini_batch != 0)
    throw ConfigError("train: mini_batch must divide group_size * rollout_batch");
  if (!(eps_clip > 0.0) || eps_clip >= 1.0)
    throw ConfigError("train: eps_clip must be in (0, 1)");
  if (!std::isfinite(learning_rate) || learning_rate <= 0.0)
    throw ConfigError("train: learning_rate must be positive");
  if (!(temperature > 0.0))
    throw ConfigError("train: temperature must be positive");
  if (kl_lambda < 0.0) throw ConfigError("train: kl_lambda must be >= 0");
  if (steps < 0) throw ConfigError("train: steps must be >= 0");
  if (eval_cadence < 0) throw ConfigError("train: eval_cadence must be >= 0");
  if (eval_cadence > 0 && eval_samples < 1)
    throw ConfigError("train: eval_samples must be >= 1");
}

AdvantageGroup compute_group_advantages(const std::vector<double>& rewards) {
  if (rewards.size() < 2)
    throw ConfigError("compute_group_advantages: group size must be >= 2");
  AdvantageGroup out;
  const double n = static_cast<double>(rewards.size());
  double sum = 0.0;
  for (double r : rewards) sum += r;
  out.mean = sum / n;
  out.degenerate = std::all_of(rewards.begin(), rewards.end(),
                               [&](double r) { return r == rewards[0]; });
  double ss = 0.0;
  for (double r : rewards) ss += (r - out.mean) * (r - out.mean);
  out.sigma = out.degenerate ? 0.0 : std::sqrt(ss / n);
  out.advantages.resize(rewards.size(), 0.0);
  if (!out.degenerate)
    for (std::size_t i = 0; i < rewards.size(); ++i)
      out.advantages[i] = (rewards[i] - out.mean) / out.sigma;
  return out;
}

TokenObjective clipped_token_objective(double rho, double advantage,
                                       double eps_clip) {
  TokenObjective o;
  const double lo = 1.0 - eps_clip;
  const double hi = 1.0 + eps_clip;
  const double clipped_rho = std::clamp(rho, lo, hi);
  o.value = std::min(rho * advantage, clipped_rho * advantage);
  if (advantage > 0.0 && rho >= hi) {
    o.clipped = true;
    o.upper = true;
  } else if (advantage < 0.0 && rho <= lo) {
    o.clipped = true;
    o.upper = false;
  }
  return o;
}

void GradientAccumulator::reset(std::size_t table_size) {
  grad.assign(table_size, 0.0);
  tokens = 0;
  clipped_upper = 0;
  clipped_lower = 0;
  token_prob_sum = 0.0;
}

namespace {

// d KL(pi || ref) / d z_v = pi_v (log(pi_v / ref_v) - KL), over the support.
void add_kl_gradient(const PolicyParams& params, const PolicyParams& ref,
                     int c, int pos, int mode, double tau, double coeff,
                     std::vector<double>& grad) {
  const auto [first, last] = params.grammar().support(pos);
  std::vector<double> p, q;
  params.row_probs(c, pos, mode, tau, p);
  ref.row_probs(c, pos, mode, tau, q);
  double kl = 0.0;
  for (int v = first; v < last; ++v)
    if (p[v] > 0.0) kl += p[v] * std::log(p[v] / q[v]);
  for (int v = first; v < last; ++v) {
    if (p[v] <= 0.0) continue;
    const std::size_t idx = params.index(c, pos, mode, v);
    grad[idx] += coeff * p[v] * (std::log(p[v] / q[v]) - kl);
  }
}

}  // namespace

void accumulate_grpo_gradient(const PolicyParams& params,
                              std::span<const Rollout> minibatch,
                              const TrainConfig& cfg, GradientAccumulator& acc,
                              const TokenMask* exclude) {
  const Grammar& g = params.grammar();
  const double tau = cfg.temperature;
  std::vector<double> probs;
  for (std::size_t r = 0; r < minibatch.size(); ++r) {
    const Rollout& ro = minibatch[r];
    const TokenSequence& seq = ro.seq;
    const double norm =
        cfg.loss_norm == LossNorm::kPerTokenMean ? 1.0 / g.seq_len : 1.0;
    double prob_sum = 0.0;
    for (int pos = 0; pos < g.seq_len; ++pos) {
      const int mode = pos == 0 ? 0 : g.mode_state(seq.tokens[0]);
      const int v = seq.tokens[pos];
      params.row_probs(seq.prompt_class, pos, mode, tau, probs);
      const double pi_theta = probs[v];
      prob_sum += pi_theta;
      if (exclude && (*exclude)[r][pos]) continue;
      acc.tokens += 1;
      const double adv = ro.advantage;
      if (adv == 0.0) continue;
      const double rho = pi_theta / seq.per_token_probs[pos];
      bool gated = false;
      if (cfg.clip_mode != ClipMode::kLossDisabled) {
        const TokenObjective o = clipped_token_objective(rho, adv, cfg.eps_clip);
        if (o.clipped) {
          gated = true;
          (o.upper ? acc.clipped_upper : acc.clipped_lower) += 1;
        }
      }
      if (gated) continue;
      const auto [first, last] = g.support(pos);
      const double coeff = norm * adv * rho / tau;
      const std::size_t base = params.index(seq.prompt_class, pos, mode, 0);
      for (int u = first; u < last; ++u)
        acc.grad[base + u] += coeff * ((u == v ? 1.0 : 0.0) - probs[u]);
    }
    acc.token_prob_sum += prob_sum / g.seq_len;
  }
}

double surrogate_value(const PolicyParams& params,
                       std::span<const Rollout> minibatch,
                       const TrainConfig& cfg, const TokenMask* exclude) {
  const Grammar& g = params.grammar();
  const double tau = cfg.temperature;
  std::vector<double> probs;
  double total = 0.0;
  for (std::size_t r = 0; r < minibatch.size(); ++r) {
    const Rollout& ro = minibatch[r];
    const TokenSequence& seq = ro.seq;
    const double norm =
        cfg.loss_norm == LossNorm::kPerTokenMean ? 1.0 / g.seq_len : 1.0;
    for (int pos = 0; pos < g.seq_len; ++pos) {
      if (exclude && (*exclude)[r][pos]) continue;
      if (ro.advantage == 0.0) continue;
      const int mode = pos == 0 ? 0 : g.mode_state(seq.tokens[0]);
      const int v = seq.tokens[pos];
      params.row_probs(seq.prompt_class, pos, mode, tau, probs);
      const double rho = probs[v] / seq.per_token_probs[pos];
      if (cfg.clip_mode == ClipMode::kLossDisabled) {
        total += norm * rho * ro.advantage;
      } else {
        total +=
            norm * clipped_token_objective(rho, ro.advantage, cfg.eps_clip).value;
      }
    }
  }
  return total;
}

namespace {

double l2_norm(const std::vector<double>& v, double scale) {
  double ss = 0.0;
  for (double x : v) ss += x * x;
  return std::sqrt(ss) * scale;
}

}  // namespace

TrainResult run_training(PolicyParams params, const TaskSpec& tasks,
                         const RewardSpec& reward, const TrainConfig& cfg_in,
                         const TrainHooks& hooks) {
  tasks.validate();
  cfg_in.validate();
  const TrainConfig cfg = cfg_in.effective();
  reward.validate(tasks);
  if (!(params.grammar() == tasks.grammar))
    throw ConfigError("run_training: policy and task grammars differ");
  if (!params.all_finite())
    throw ConfigError("run_training: initial params are not finite");

  const std::vector<int> domain = reward.prompt_domain(tasks);
  if (domain.empty()) throw ConfigError("run_training: empty prompt domain");

  const int G = cfg.group_size;
  const int B_r = cfg.rollout_batch;
  const int B_m = cfg.mini_batch;
  const int M = cfg.updates_per_phase();

  PolicyParams kl_ref;
  if (cfg.kl_lambda != 0.0) kl_ref = params;

  TrainResult result;
  auto run_eval = [&](int step) -> const EvalReport& {
    EvalReport report =
        evaluate_policy(params, tasks, cfg.eval_samples,
                        derive_seed(cfg.seed, {stream::kEval,
                                               static_cast<std::uint64_t>(step)}),
                        cfg.temperature);
    report.step = step;
    result.evals.push_back(std::move(report));
    if (hooks.on_eval) hooks.on_eval(result.evals.back());
    if (hooks.on_checkpoint) hooks.on_checkpoint(step, params);
    return result.evals.back();
  };

  const bool evals_on = cfg.eval_cadence > 0 && !tasks.eval_classes.empty();
  if (evals_on) run_eval(0);

  std::vector<Rollout> rollouts(static_cast<std::size_t>(B_r) * G);
  std::vector<double> group_rewards(G);
  GradientAccumulator acc;

  for (int step = 1; step <= cfg.steps; ++step) {
    const PolicyParams snapshot = params;
    const std::uint64_t ustep = static_cast<std::uint64_t>(step);

    auto prompt_rng = derive_rng(cfg.seed, {stream::kPrompt, ustep});
    double reward_sum = 0.0;
    for (int j = 0; j < B_r; ++j) {
      const int cls = domain[prompt_rng() % domain.size()];
      for (int k = 0; k < G; ++k) {
        Rollout& ro = rollouts[static_cast<std::size_t>(j) * G + k];
        auto rollout_rng =
            derive_rng(cfg.seed, {stream::kRollout, ustep,
                                  static_cast<std::uint64_t>(j),
                                  static_cast<std::uint64_t>(k)});
        ro.seq = snapshot.sample_sequence(cls, cfg.temperature, rollout_rng);
        const ParsedOutcome parsed = parse_sequence(tasks, ro.seq);
        auto reward_rng =
            derive_rng(cfg.seed, {stream::kReward, ustep,
                                  static_cast<std::uint64_t>(j),
                                  static_cast<std::uint64_t>(k)});
        ro.reward = score_reward(reward, parsed, cls, reward_rng);
        group_rewards[k] = ro.reward;
        reward_sum += ro.reward;
      }
      const AdvantageGroup adv = compute_group_advantages(group_rewards);
      for (int k = 0; k < G; ++k)
        rollouts[static_cast<std::size_t>(j) * G + k].advantage =
            adv.advantages[k];
    }

    std::int64_t tokens = 0, upper = 0, lower = 0;
    double grad_norm_sum = 0.0;
    double token_prob_sum = 0.0;
    for (int i = 0; i < M; ++i) {
      acc.reset(params.table().size());
      const std::span<const Rollout> minibatch(
          rollouts.data() + static_cast<std::size_t>(i) * B_m,
          static_cast<std::size_t>(B_m));
      accumulate_grpo_gradient(params, minibatch, cfg, acc);
      if (cfg.kl_lambda != 0.0) {
        const Grammar& g = params.grammar();
        const double norm =
            cfg.loss_norm == LossNorm::kPerTokenMean ? 1.0 / g.seq_len : 1.0;
        for (const Rollout& ro : minibatch)
          for (int pos = 0; pos < g.seq_len; ++pos)
            add_kl_gradient(params, kl_ref, ro.seq.prompt_class, pos,
                            pos == 0 ? 0 : g.mode_state(ro.seq.tokens[0]),
                            cfg.temperature, -cfg.kl_lambda * norm, acc.grad);
      }
      const double scale = cfg.learning_rate / B_m;
      auto& table = params.table();
      for (std::size_t idx = 0; idx < table.size(); ++idx)
        table[idx] += scale * acc.grad[idx];
      if (!params.all_finite())
        throw DivergenceError(step,
                              "training diverged: non-finite parameter at step " +
                                  std::to_string(step));
      tokens += acc.tokens;
      upper += acc.clipped_upper;
      lower += acc.clipped_lower;
      grad_norm_sum += l2_norm(acc.grad, 1.0 / B_m);
      token_prob_sum += acc.token_prob_sum / B_m;
    }

    MetricsRecord rec;
    rec.step = step;
    rec.reward_mean = reward_sum / (static_cast<double>(B_r) * G);
    rec.clip_upper_frac = static_cast<double>(upper) / tokens;
    rec.clip_lower_frac = static_cast<double>(lower) / tokens;
    rec.grad_norm = grad_norm_sum / M;
    rec.avg_token_prob = token_prob_sum / M;
    if (evals_on && (step % cfg.eval_cadence == 0 || step == cfg.steps)) {
      const EvalReport& report = run_eval(step);
      rec.accuracy = report.accuracy;
      rec.pattern_freq = report.pattern_frequency;
    }
    if (hooks.on_metrics) hooks.on_metrics(rec);
    result.metrics.push_back(rec);
    result.steps_completed = step;
  }

  result.params = std::move(params);
  return result;
}

}  // namespace grpolab
