#include "grpolab/config.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string>

#include <json.hpp>

#include "grpolab/errors.hpp"

namespace grpolab {

using nlohmann::json;

ClipMode parse_clip_mode(const std::string& name) {
  if (name == "standard") return ClipMode::kStandard;
  if (name == "loss_disabled") return ClipMode::kLossDisabled;
  if (name == "batch_matched_minibatch") return ClipMode::kBatchMatchedMinibatch;
  if (name == "batch_matched_rollout") return ClipMode::kBatchMatchedRollout;
  throw ConfigError("unknown clip_mode '" + name + "'");
}

LossNorm parse_loss_norm(const std::string& name) {
  if (name == "per_token_mean") return LossNorm::kPerTokenMean;
  if (name == "per_token_sum") return LossNorm::kPerTokenSum;
  throw ConfigError("unknown loss_norm '" + name + "'");
}

RewardKind parse_reward_kind(const std::string& name) {
  if (name == "ground_truth") return RewardKind::kGroundTruth;
  if (name == "majority_vote") return RewardKind::kMajorityVote;
  if (name == "format") return RewardKind::kFormat;
  if (name == "random") return RewardKind::kRandom;
  if (name == "incorrect_label") return RewardKind::kIncorrectLabel;
  if (name == "pattern") return RewardKind::kPattern;
  if (name == "no_repetition") return RewardKind::kNoRepetition;
  if (name == "compound") return RewardKind::kCompound;
  throw ConfigError("unknown reward kind '" + name + "'");
}

namespace {

void check_keys(const json& j, std::initializer_list<const char*> allowed,
                const char* where) {
  if (!j.is_object()) {
    throw ConfigError(std::string(where) + " must be a JSON object");
  }
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* key : allowed) {
      if (item.key() == key) {
        known = true;
        break;
      }
    }
    if (!known) {
      throw ConfigError("unknown key '" + item.key() + "' in " + where);
    }
  }
}

template <typename T>
void read_field(const json& j, const char* key, T& out) {
  if (auto it = j.find(key); it != j.end()) {
    try {
      out = it->get<T>();
    } catch (const json::exception&) {
      throw ConfigError(std::string("bad value for '") + key + "'");
    }
  }
}

Grammar grammar_from_json(const json& j) {
  check_keys(j, {"classes", "seq_len", "fillers", "answers"}, "grammar");
  Grammar g{32, 5, 4, 8};
  read_field(j, "classes", g.num_classes);
  read_field(j, "seq_len", g.seq_len);
  read_field(j, "fillers", g.num_fillers);
  read_field(j, "answers", g.num_answers);
  return g;
}

json grammar_to_json(const Grammar& g) {
  return json{{"classes", g.num_classes},
              {"seq_len", g.seq_len},
              {"fillers", g.num_fillers},
              {"answers", g.num_answers}};
}

CalibrationTargets calibration_from_json(const json& j) {
  check_keys(j,
             {"pattern_rate", "acc_given_pattern", "acc_given_lang",
              "parse_rate", "tolerance"},
             "calibration");
  CalibrationTargets t;
  read_field(j, "pattern_rate", t.pattern_rate);
  read_field(j, "acc_given_pattern", t.acc_given_pattern);
  read_field(j, "acc_given_lang", t.acc_given_lang);
  read_field(j, "parse_rate", t.parse_rate);
  read_field(j, "tolerance", t.tolerance);
  return t;
}

json calibration_to_json(const CalibrationTargets& t) {
  return json{{"pattern_rate", t.pattern_rate},
              {"acc_given_pattern", t.acc_given_pattern},
              {"acc_given_lang", t.acc_given_lang},
              {"parse_rate", t.parse_rate},
              {"tolerance", t.tolerance}};
}

RewardConfig reward_from_json(const json& j, bool nested) {
  check_keys(j,
             {"kind", "gamma", "max_run", "labels_file", "forbid_pattern",
              "base"},
             nested ? "reward.base" : "reward");
  RewardConfig r;
  std::string kind = "ground_truth";
  read_field(j, "kind", kind);
  r.kind = parse_reward_kind(kind);

  auto reject_unless = [&](const char* key, bool applicable) {
    if (!applicable && j.contains(key)) {
      throw ConfigError(std::string("key '") + key +
                        "' does not apply to reward kind '" + kind + "'");
    }
  };
  reject_unless("gamma", r.kind == RewardKind::kRandom);
  reject_unless("max_run", r.kind == RewardKind::kNoRepetition);
  reject_unless("labels_file", r.kind == RewardKind::kMajorityVote ||
                                   r.kind == RewardKind::kIncorrectLabel);
  reject_unless("forbid_pattern", r.kind == RewardKind::kCompound);
  reject_unless("base", r.kind == RewardKind::kCompound);

  read_field(j, "gamma", r.gamma);
  read_field(j, "max_run", r.max_run);
  read_field(j, "labels_file", r.labels_file);
  read_field(j, "forbid_pattern", r.forbid_pattern);
  if (r.kind == RewardKind::kCompound) {
    if (nested) {
      throw ConfigError("compound rewards cannot nest");
    }
    if (!j.contains("base")) {
      throw ConfigError("compound reward needs a 'base'");
    }
    r.base = std::make_shared<RewardConfig>(reward_from_json(j.at("base"),
                                                             true));
  }
  return r;
}

json reward_to_json(const RewardConfig& r) {
  json j{{"kind", reward_kind_name(r.kind)}};
  switch (r.kind) {
    case RewardKind::kRandom:
      j["gamma"] = r.gamma;
      break;
    case RewardKind::kNoRepetition:
      j["max_run"] = r.max_run;
      break;
    case RewardKind::kMajorityVote:
    case RewardKind::kIncorrectLabel:
      if (!r.labels_file.empty()) j["labels_file"] = r.labels_file;
      break;
    case RewardKind::kCompound:
      j["forbid_pattern"] = r.forbid_pattern;
      j["base"] = r.base ? reward_to_json(*r.base) : json::object();
      break;
    default:
      break;
  }
  return j;
}

TrainConfig train_from_json(const json& j) {
  check_keys(j,
             {"group_size", "rollout_batch", "mini_batch", "eps_clip",
              "kl_lambda", "learning_rate", "temperature", "clip_mode",
              "loss_norm", "steps", "seed", "eval_cadence", "eval_samples"},
             "train");
  TrainConfig t;
  read_field(j, "group_size", t.group_size);
  read_field(j, "rollout_batch", t.rollout_batch);
  read_field(j, "mini_batch", t.mini_batch);
  read_field(j, "eps_clip", t.eps_clip);
  read_field(j, "kl_lambda", t.kl_lambda);
  read_field(j, "learning_rate", t.learning_rate);
  read_field(j, "temperature", t.temperature);
  read_field(j, "steps", t.steps);
  read_field(j, "seed", t.seed);
  read_field(j, "eval_cadence", t.eval_cadence);
  read_field(j, "eval_samples", t.eval_samples);
  std::string clip_mode = clip_mode_name(t.clip_mode);
  std::string loss_norm = loss_norm_name(t.loss_norm);
  read_field(j, "clip_mode", clip_mode);
  read_field(j, "loss_norm", loss_norm);
  t.clip_mode = parse_clip_mode(clip_mode);
  t.loss_norm = parse_loss_norm(loss_norm);
  return t;
}

json train_to_json(const TrainConfig& t) {
  return json{{"group_size", t.group_size},
              {"rollout_batch", t.rollout_batch},
              {"mini_batch", t.mini_batch},
              {"eps_clip", t.eps_clip},
              {"kl_lambda", t.kl_lambda},
              {"learning_rate", t.learning_rate},
              {"temperature", t.temperature},
              {"clip_mode", clip_mode_name(t.clip_mode)},
              {"loss_norm", loss_norm_name(t.loss_norm)},
              {"steps", t.steps},
              {"seed", t.seed},
              {"eval_cadence", t.eval_cadence},
              {"eval_samples", t.eval_samples}};
}

SweepAxes sweep_from_json(const json& j) {
  check_keys(j, {"gammas", "clip_modes"}, "sweep");
  SweepAxes s;
  read_field(j, "gammas", s.gammas);
  read_field(j, "clip_modes", s.clip_modes);
  return s;
}

json sweep_to_json(const SweepAxes& s) {
  return json{{"gammas", s.gammas}, {"clip_modes", s.clip_modes}};
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  check_keys(j,
             {"name", "grammar", "task", "calibration", "reward", "train",
              "seeds", "sweep", "output_dir", "checkpoint_cadence",
              "initial_policy"},
             "config");
  ExperimentConfig cfg;
  read_field(j, "name", cfg.name);
  if (j.contains("grammar")) cfg.grammar = grammar_from_json(j.at("grammar"));
  if (j.contains("task")) {
    check_keys(j.at("task"), {"train_classes"}, "task");
    read_field(j.at("task"), "train_classes", cfg.train_classes);
  }
  if (j.contains("calibration")) {
    cfg.calibration = calibration_from_json(j.at("calibration"));
  }
  if (j.contains("reward")) {
    cfg.reward = reward_from_json(j.at("reward"), false);
  }
  if (j.contains("train")) cfg.train = train_from_json(j.at("train"));
  read_field(j, "seeds", cfg.seeds);
  if (j.contains("sweep")) cfg.sweep = sweep_from_json(j.at("sweep"));
  read_field(j, "output_dir", cfg.output_dir);
  read_field(j, "checkpoint_cadence", cfg.checkpoint_cadence);
  read_field(j, "initial_policy", cfg.initial_policy);
  return cfg;
}

ExperimentConfig ExperimentConfig::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_json_text(buf.str());
}

std::string ExperimentConfig::to_json_text() const {
  json j{{"name", name},
         {"grammar", grammar_to_json(grammar)},
         {"task", json{{"train_classes", train_classes}}},
         {"calibration", calibration_to_json(calibration)},
         {"reward", reward_to_json(reward)},
         {"train", train_to_json(train)},
         {"seeds", seeds},
         {"sweep", sweep_to_json(sweep)},
         {"output_dir", output_dir},
         {"checkpoint_cadence", checkpoint_cadence},
         {"initial_policy", initial_policy}};
  return j.dump(2) + "\n";
}

void ExperimentConfig::validate() const {
  if (name.empty()) throw ConfigError("name must not be empty");
  if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
  grammar.validate();
  if (train_classes < 1 || train_classes >= grammar.num_classes) {
    throw ConfigError(
        "train_classes must leave at least one class on each side of the "
        "split");
  }
  auto unit = [](double p, const char* what) {
    if (!(p >= 0.0 && p <= 1.0)) {
      throw ConfigError(std::string(what) + " must lie in [0, 1]");
    }
  };
  unit(calibration.pattern_rate, "pattern_rate");
  unit(calibration.acc_given_pattern, "acc_given_pattern");
  unit(calibration.acc_given_lang, "acc_given_lang");
  unit(calibration.parse_rate, "parse_rate");
  if (!(calibration.tolerance >= 0.0)) {
    throw ConfigError("tolerance must be nonnegative");
  }
  train.validate();
  if (checkpoint_cadence < 0) {
    throw ConfigError("checkpoint_cadence must be nonnegative");
  }
  if (seeds.empty()) throw ConfigError("seeds must not be empty");
  for (const RewardConfig* r = &reward; r != nullptr; r = r->base.get()) {
    if (r->kind == RewardKind::kRandom) unit(r->gamma, "gamma");
    if (r->kind == RewardKind::kNoRepetition && r->max_run < 1) {
      throw ConfigError("max_run must be at least 1");
    }
    if (r->kind == RewardKind::kCompound) {
      if (!r->base) throw ConfigError("compound reward needs a 'base'");
      if (r->base->kind == RewardKind::kCompound) {
        throw ConfigError("compound rewards cannot nest");
      }
    }
  }
  for (const auto& mode : sweep.clip_modes) parse_clip_mode(mode);
  for (double g : sweep.gammas) unit(g, "sweep gamma");
}

TaskSpec ExperimentConfig::make_tasks() const {
  return TaskSpec::make_default(grammar, train_classes);
}

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string hash_hex(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, value);
  return std::string(buf);
}

}  // namespace grpolab
