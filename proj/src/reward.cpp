#include "grpolab/reward.hpp"

#include <algorithm>
#include <fstream>

#include <json.hpp>

#include "grpolab/errors.hpp"
#include "grpolab/rng.hpp"

namespace grpolab {

using nlohmann::json;

void LabelSet::save_file(const std::string& path) const {
  json j;
  j["labels"] = json::object();
  for (const auto& [c, a] : labels) j["labels"][std::to_string(c)] = a;
  j["fallback_classes"] = fallback_classes;
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out << j.dump(2) << "\n";
}

LabelSet LabelSet::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("labels file " + path + ": " + e.what());
  }
  LabelSet set;
  for (const auto& [key, value] : j.at("labels").items())
    set.labels[std::stoi(key)] = value.get<int>();
  if (j.contains("fallback_classes"))
    set.fallback_classes = j["fallback_classes"].get<std::vector<int>>();
  return set;
}

const char* reward_kind_name(RewardKind kind) {
  switch (kind) {
    case RewardKind::kGroundTruth: return "ground_truth";
    case RewardKind::kMajorityVote: return "majority_vote";
    case RewardKind::kFormat: return "format";
    case RewardKind::kRandom: return "random";
    case RewardKind::kIncorrectLabel: return "incorrect_label";
    case RewardKind::kPattern: return "pattern";
    case RewardKind::kNoRepetition: return "no_repetition";
    case RewardKind::kCompound: return "compound";
  }
  return "?";
}

RewardSpec RewardSpec::format() {
  RewardSpec s;
  s.kind = RewardKind::kFormat;
  return s;
}

RewardSpec RewardSpec::random(double gamma) {
  RewardSpec s;
  s.kind = RewardKind::kRandom;
  s.gamma = gamma;
  return s;
}

RewardSpec RewardSpec::pattern() {
  RewardSpec s;
  s.kind = RewardKind::kPattern;
  return s;
}

RewardSpec RewardSpec::no_repetition(int max_run) {
  RewardSpec s;
  s.kind = RewardKind::kNoRepetition;
  s.max_run = max_run;
  return s;
}

RewardSpec RewardSpec::majority_vote(LabelSet labels) {
  RewardSpec s;
  s.kind = RewardKind::kMajorityVote;
  s.labels = std::move(labels);
  return s;
}

RewardSpec RewardSpec::incorrect_label(LabelSet labels,
                                       std::vector<int> active_classes) {
  RewardSpec s;
  s.kind = RewardKind::kIncorrectLabel;
  s.labels = std::move(labels);
  s.active_classes = std::move(active_classes);
  return s;
}

RewardSpec RewardSpec::compound(RewardSpec base, bool forbid_pattern) {
  RewardSpec s;
  s.kind = RewardKind::kCompound;
  s.base = std::make_shared<RewardSpec>(std::move(base));
  s.forbid_pattern = forbid_pattern;
  return s;
}

std::vector<int> RewardSpec::prompt_domain(const TaskSpec& tasks) const {
  switch (kind) {
    case RewardKind::kMajorityVote: {
      std::vector<int> domain;
      for (const auto& [c, a] : labels.labels) domain.push_back(c);
      return domain;
    }
    case RewardKind::kIncorrectLabel:
      return active_classes;
    case RewardKind::kCompound:
      return base->prompt_domain(tasks);
    default: {
      std::vector<int> domain(tasks.grammar.num_classes);
      for (int c = 0; c < tasks.grammar.num_classes; ++c) domain[c] = c;
      return domain;
    }
  }
}

void RewardSpec::validate(const TaskSpec& tasks) const {
  switch (kind) {
    case RewardKind::kRandom:
      if (gamma < 0.0 || gamma > 1.0)
        throw ConfigError("reward: gamma outside [0, 1]");
      break;
    case RewardKind::kNoRepetition:
      if (max_run < 1) throw ConfigError("reward: max_run must be >= 1");
      break;
    case RewardKind::kMajorityVote:
      if (labels.labels.empty())
        throw ConfigError("reward: majority_vote needs labels");
      for (const auto& [c, a] : labels.labels)
        if (c < 0 || c >= tasks.grammar.num_classes ||
            !tasks.grammar.is_answer(a))
          throw ConfigError("reward: label outside grammar");
      break;
    case RewardKind::kIncorrectLabel: {
      if (active_classes.empty())
        throw ConfigError(
            "reward: incorrect_label has no active classes (every label "
            "matches the true answer)");
      for (int c : active_classes)
        if (!labels.labels.count(c))
          throw ConfigError("reward: active class has no label");
      break;
    }
    case RewardKind::kCompound:
      if (!base) throw ConfigError("reward: compound needs a base");
      if (base->kind == RewardKind::kCompound)
        throw ConfigError("reward: compound bases cannot nest");
      base->validate(tasks);
      break;
    default:
      break;
  }
}

int score_reward(const RewardSpec& spec, const ParsedOutcome& parsed,
                 int prompt_class, std::mt19937_64& rng) {
  switch (spec.kind) {
    case RewardKind::kGroundTruth:
      return parsed.correct ? 1 : 0;
    case RewardKind::kMajorityVote: {
      auto it = spec.labels.labels.find(prompt_class);
      if (it == spec.labels.labels.end())
        throw ConfigError("majority_vote: no label for class " +
                          std::to_string(prompt_class));
      return parsed.extracted_answer == it->second ? 1 : 0;
    }
    case RewardKind::kFormat:
      return parsed.parseable ? 1 : 0;
    case RewardKind::kRandom:
      return uniform01(rng) < spec.gamma ? 1 : 0;
    case RewardKind::kIncorrectLabel: {
      auto it = spec.labels.labels.find(prompt_class);
      if (it == spec.labels.labels.end())
        throw ConfigError("incorrect_label: no label for class " +
                          std::to_string(prompt_class));
      return parsed.extracted_answer == it->second ? 1 : 0;
    }
    case RewardKind::kPattern:
      return parsed.uses_pattern ? 1 : 0;
    case RewardKind::kNoRepetition:
      return parsed.max_repeat_run <= spec.max_run ? 1 : 0;
    case RewardKind::kCompound: {
      const int r = score_reward(*spec.base, parsed, prompt_class, rng);
      if (spec.forbid_pattern && parsed.uses_pattern) return 0;
      return r;
    }
  }
  throw ConfigError("score_reward: unknown reward kind");
}

LabelSet majority_vote_labels(const PolicyParams& params,
                              const TaskSpec& tasks, int n_samples,
                              std::uint64_t seed, double tau) {
  if (n_samples < 1)
    throw ConfigError("majority_vote_labels: n_samples must be >= 1");
  LabelSet set;
  std::vector<int> classes = tasks.train_classes;
  std::sort(classes.begin(), classes.end());
  const Grammar& g = tasks.grammar;
  for (int c : classes) {
    auto rng =
        derive_rng(seed, {stream::kLabel, static_cast<std::uint64_t>(c)});
    std::vector<int> counts(g.num_answers, 0);
    for (int i = 0; i < n_samples; ++i) {
      const TokenSequence seq = params.sample_sequence(c, tau, rng);
      const ParsedOutcome parsed = parse_sequence(tasks, seq);
      if (parsed.extracted_answer != ParsedOutcome::kNone)
        counts[parsed.extracted_answer - g.answer_begin()] += 1;
    }
    int best = 0;
    for (int k = 1; k < g.num_answers; ++k)
      if (counts[k] > counts[best]) best = k;  // ties keep the smaller index
    if (counts[best] == 0) set.fallback_classes.push_back(c);
    set.labels[c] = g.answer(best);
  }
  return set;
}

std::vector<int> incorrect_label_subset(const LabelSet& labels,
                                        const TaskSpec& tasks) {
  std::vector<int> active;
  for (const auto& [c, a] : labels.labels)
    if (a != tasks.true_answers.at(c)) active.push_back(c);
  if (active.empty())
    throw ConfigError(
        "incorrect_label: every pseudo-label matches the true answer");
  return active;
}

}  // namespace grpolab
