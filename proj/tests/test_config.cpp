#include <doctest.h>

#include <string>

#include "grpolab/config.hpp"
#include "grpolab/errors.hpp"

using namespace grpolab;

TEST_CASE("defaults round-trip through the canonical JSON text") {
  const ExperimentConfig cfg;
  const std::string text = cfg.to_json_text();
  const ExperimentConfig loaded = ExperimentConfig::from_json_text(text);
  CHECK(loaded.to_json_text() == text);
  CHECK(text.back() == '\n');
  CHECK_NOTHROW(loaded.validate());
}

TEST_CASE("an empty document means all defaults") {
  const ExperimentConfig cfg = ExperimentConfig::from_json_text("{}");
  CHECK(cfg.to_json_text() == ExperimentConfig{}.to_json_text());
  CHECK(cfg.grammar.num_classes == 32);
  CHECK(cfg.grammar.seq_len == 5);
  CHECK(cfg.train_classes == 24);
  CHECK(cfg.train.group_size == 16);
  CHECK(cfg.reward.kind == RewardKind::kGroundTruth);
  CHECK(cfg.seeds == std::vector<std::uint64_t>{1, 2, 3, 4, 5});
}

TEST_CASE("non-default fields survive a round trip") {
  const std::string text = R"({
    "name": "bias-probe",
    "grammar": {"classes": 8, "seq_len": 4, "fillers": 2, "answers": 3},
    "task": {"train_classes": 6},
    "calibration": {"pattern_rate": 0.5, "tolerance": 0.01},
    "reward": {"kind": "compound", "forbid_pattern": true,
               "base": {"kind": "random", "gamma": 0.3}},
    "train": {"steps": 12, "clip_mode": "loss_disabled",
              "loss_norm": "per_token_sum", "seed": 9},
    "seeds": [9, 10],
    "sweep": {"gammas": [0.5], "clip_modes": ["standard"]},
    "output_dir": "runs/bias-probe",
    "checkpoint_cadence": 6
  })";
  const ExperimentConfig cfg = ExperimentConfig::from_json_text(text);
  CHECK(cfg.name == "bias-probe");
  CHECK(cfg.grammar.num_classes == 8);
  CHECK(cfg.train_classes == 6);
  CHECK(cfg.calibration.pattern_rate == 0.5);
  CHECK(cfg.calibration.tolerance == 0.01);
  CHECK(cfg.reward.kind == RewardKind::kCompound);
  REQUIRE(cfg.reward.base);
  CHECK(cfg.reward.base->kind == RewardKind::kRandom);
  CHECK(cfg.reward.base->gamma == 0.3);
  CHECK(cfg.train.steps == 12);
  CHECK(cfg.train.clip_mode == ClipMode::kLossDisabled);
  CHECK(cfg.train.loss_norm == LossNorm::kPerTokenSum);
  CHECK(cfg.train.seed == 9);
  CHECK(cfg.checkpoint_cadence == 6);

  const ExperimentConfig again =
      ExperimentConfig::from_json_text(cfg.to_json_text());
  CHECK(again.to_json_text() == cfg.to_json_text());
}

TEST_CASE("unknown keys are rejected at every level") {
  CHECK_THROWS_WITH_AS(ExperimentConfig::from_json_text(R"({"nam": "x"})"),
                       doctest::Contains("nam"), ConfigError);
  CHECK_THROWS_AS(
      ExperimentConfig::from_json_text(R"({"grammar": {"classess": 3}})"),
      ConfigError);
  CHECK_THROWS_AS(
      ExperimentConfig::from_json_text(R"({"task": {"eval_classes": 3}})"),
      ConfigError);
  CHECK_THROWS_AS(
      ExperimentConfig::from_json_text(R"({"train": {"lr": 10}})"),
      ConfigError);
  CHECK_THROWS_AS(
      ExperimentConfig::from_json_text(R"({"reward": {"flavor": "x"}})"),
      ConfigError);
  CHECK_THROWS_AS(
      ExperimentConfig::from_json_text(R"({"sweep": {"gamma": [0.5]}})"),
      ConfigError);
  CHECK_THROWS_AS(
      ExperimentConfig::from_json_text(
          R"({"calibration": {"acc": 0.5}})"),
      ConfigError);
  CHECK_THROWS_AS(
      ExperimentConfig::from_json_text(
          R"({"reward": {"kind": "compound",
               "base": {"kind": "random", "gama": 0.3}}})"),
      ConfigError);
}

TEST_CASE("reward keys that do not apply to the kind are rejected") {
  CHECK_THROWS_WITH_AS(
      ExperimentConfig::from_json_text(
          R"({"reward": {"kind": "ground_truth", "gamma": 0.5}})"),
      doctest::Contains("gamma"), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_json_text(
                      R"({"reward": {"kind": "random", "max_run": 5}})"),
                  ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_json_text(
                      R"({"reward": {"kind": "format", "labels_file": "x"}})"),
                  ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_json_text(
                      R"({"reward": {"kind": "random", "gamma": 0.5,
                           "forbid_pattern": true}})"),
                  ConfigError);
  CHECK_THROWS_AS(
      ExperimentConfig::from_json_text(R"({"reward": {"kind": "compound"}})"),
      ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_json_text(
                      R"({"reward": {"kind": "compound",
                           "base": {"kind": "compound",
                                    "base": {"kind": "format"}}}})"),
                  ConfigError);
  CHECK_NOTHROW(ExperimentConfig::from_json_text(
      R"({"reward": {"kind": "no_repetition", "max_run": 3}})"));
  CHECK_NOTHROW(ExperimentConfig::from_json_text(
      R"({"reward": {"kind": "majority_vote", "labels_file": "labels.json"}})"));
}

TEST_CASE("malformed documents fail with a config error") {
  CHECK_THROWS_AS(ExperimentConfig::from_json_text("not json"), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_json_text("[1, 2]"), ConfigError);
  CHECK_THROWS_AS(
      ExperimentConfig::from_json_text(R"({"train": {"steps": "many"}})"),
      ConfigError);
  CHECK_THROWS_AS(
      ExperimentConfig::from_json_text(R"({"train": {"clip_mode": "soft"}})"),
      ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::load_file("/nonexistent/config.json"),
                  ConfigError);
}

TEST_CASE("mode parsers accept exactly the documented names") {
  CHECK(parse_clip_mode("standard") == ClipMode::kStandard);
  CHECK(parse_clip_mode("loss_disabled") == ClipMode::kLossDisabled);
  CHECK(parse_clip_mode("batch_matched_minibatch") ==
        ClipMode::kBatchMatchedMinibatch);
  CHECK(parse_clip_mode("batch_matched_rollout") ==
        ClipMode::kBatchMatchedRollout);
  CHECK_THROWS_AS(parse_clip_mode("Standard"), ConfigError);

  CHECK(parse_loss_norm("per_token_mean") == LossNorm::kPerTokenMean);
  CHECK(parse_loss_norm("per_token_sum") == LossNorm::kPerTokenSum);
  CHECK_THROWS_AS(parse_loss_norm("token_mean"), ConfigError);

  CHECK(parse_reward_kind("ground_truth") == RewardKind::kGroundTruth);
  CHECK(parse_reward_kind("majority_vote") == RewardKind::kMajorityVote);
  CHECK(parse_reward_kind("format") == RewardKind::kFormat);
  CHECK(parse_reward_kind("random") == RewardKind::kRandom);
  CHECK(parse_reward_kind("incorrect_label") == RewardKind::kIncorrectLabel);
  CHECK(parse_reward_kind("pattern") == RewardKind::kPattern);
  CHECK(parse_reward_kind("no_repetition") == RewardKind::kNoRepetition);
  CHECK(parse_reward_kind("compound") == RewardKind::kCompound);
  CHECK_THROWS_AS(parse_reward_kind("spurious"), ConfigError);
}

TEST_CASE("config validation enforces cross-field constraints") {
  ExperimentConfig cfg;
  CHECK_NOTHROW(cfg.validate());

  ExperimentConfig bad = cfg;
  bad.train_classes = 32;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad.train_classes = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  bad = cfg;
  bad.calibration.pattern_rate = 1.5;
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  bad = cfg;
  bad.reward.kind = RewardKind::kRandom;
  bad.reward.gamma = -0.2;
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  bad = cfg;
  bad.seeds.clear();
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  bad = cfg;
  bad.sweep.clip_modes = {"sideways"};
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  bad = cfg;
  bad.checkpoint_cadence = -1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  bad = cfg;
  bad.name.clear();
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("task split helper matches the grammar in the config") {
  ExperimentConfig cfg;
  cfg.grammar = Grammar{8, 4, 2, 4};
  cfg.train_classes = 5;
  const TaskSpec tasks = cfg.make_tasks();
  CHECK(tasks.train_classes.size() == 5);
  CHECK(tasks.eval_classes.size() == 3);
  CHECK(tasks.grammar == cfg.grammar);
}

TEST_CASE("the config hash is stable across processes") {
  CHECK(fnv1a("") == 14695981039346656037ull);
  CHECK(fnv1a("a") == 0xaf63dc4c8601ec8cull);
  CHECK(hash_hex(fnv1a("a")) == "af63dc4c8601ec8c");
  CHECK(hash_hex(0) == "0000000000000000");
  const ExperimentConfig cfg;
  CHECK(fnv1a(cfg.to_json_text()) == fnv1a(cfg.to_json_text()));
}
