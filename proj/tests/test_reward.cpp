#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>

#include "grpolab/errors.hpp"
#include "grpolab/reward.hpp"

using namespace grpolab;

namespace {

ParsedOutcome outcome(bool pattern, bool parseable, bool correct,
                      int answer = ParsedOutcome::kNone, int repeat = 1) {
  ParsedOutcome o;
  o.uses_pattern = pattern;
  o.parseable = parseable;
  o.correct = correct;
  o.extracted_answer = answer;
  o.max_repeat_run = repeat;
  return o;
}

int score(const RewardSpec& spec, const ParsedOutcome& parsed, int cls = 0,
          std::uint64_t seed = 1) {
  std::mt19937_64 rng(seed);
  return score_reward(spec, parsed, cls, rng);
}

}  // namespace

TEST_CASE("correctness reward follows the true answer") {
  const RewardSpec spec = RewardSpec::ground_truth();
  CHECK(score(spec, outcome(true, true, true)) == 1);
  CHECK(score(spec, outcome(false, true, true)) == 1);
  CHECK(score(spec, outcome(true, true, false)) == 0);
  CHECK(score(spec, outcome(true, false, false)) == 0);
}

TEST_CASE("format reward pays for any parseable answer") {
  const RewardSpec spec = RewardSpec::format();
  CHECK(score(spec, outcome(true, true, false)) == 1);
  CHECK(score(spec, outcome(false, true, true)) == 1);
  CHECK(score(spec, outcome(true, false, false)) == 0);
}

TEST_CASE("pattern reward pays for the position-0 behavior alone") {
  const RewardSpec spec = RewardSpec::pattern();
  CHECK(score(spec, outcome(true, false, false)) == 1);
  CHECK(score(spec, outcome(true, true, true)) == 1);
  CHECK(score(spec, outcome(false, true, true)) == 0);
}

TEST_CASE("repetition reward tolerates runs up to the limit") {
  const RewardSpec spec = RewardSpec::no_repetition(2);
  CHECK(score(spec, outcome(true, true, true, 6, 1)) == 1);
  CHECK(score(spec, outcome(true, true, true, 6, 2)) == 1);
  CHECK(score(spec, outcome(true, true, true, 6, 3)) == 0);
}

TEST_CASE("random reward ignores the rollout entirely") {
  CHECK(score(RewardSpec::random(1.0), outcome(false, false, false)) == 1);
  CHECK(score(RewardSpec::random(0.0), outcome(true, true, true)) == 0);

  // identical engine state gives identical draws whatever the rollout did
  for (std::uint64_t seed : {7ull, 8ull, 9ull}) {
    CHECK(score(RewardSpec::random(0.5), outcome(true, true, true), 0, seed) ==
          score(RewardSpec::random(0.5), outcome(false, false, false), 3,
                seed));
  }

  std::mt19937_64 rng(2026);
  const RewardSpec spec = RewardSpec::random(0.3);
  const ParsedOutcome fixed = outcome(true, true, true);
  int hits = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) hits += score_reward(spec, fixed, 0, rng);
  const double freq = static_cast<double>(hits) / n;
  CHECK(std::abs(freq - 0.3) < 4.0 * std::sqrt(0.3 * 0.7 / n));
}

TEST_CASE("label rewards compare against the stored pseudo-label") {
  const Grammar g{4, 3, 1, 3};
  LabelSet labels;
  labels.labels = {{0, g.answer(1)}, {1, g.answer(0)}};

  const RewardSpec vote = RewardSpec::majority_vote(labels);
  CHECK(score(vote, outcome(true, true, false, g.answer(1)), 0) == 1);
  CHECK(score(vote, outcome(true, true, true, g.answer(0)), 0) == 0);
  CHECK(score(vote, outcome(false, false, false), 0) == 0);
  CHECK_THROWS_AS(score(vote, outcome(true, true, true, g.answer(0)), 2),
                  ConfigError);

  const RewardSpec wrong = RewardSpec::incorrect_label(labels, {0});
  CHECK(score(wrong, outcome(true, true, false, g.answer(1)), 0) == 1);
  CHECK(score(wrong, outcome(true, true, true, g.answer(0)), 0) == 0);
}

TEST_CASE("compound reward zeroes pattern rollouts on top of its base") {
  const RewardSpec spec = RewardSpec::compound(RewardSpec::format(), true);
  CHECK(score(spec, outcome(false, true, false)) == 1);
  CHECK(score(spec, outcome(true, true, true)) == 0);
  CHECK(score(spec, outcome(false, false, false)) == 0);

  const RewardSpec keep = RewardSpec::compound(RewardSpec::format(), false);
  CHECK(score(keep, outcome(true, true, false)) == 1);
}

TEST_CASE("prompt domains cover exactly the classes the reward can score") {
  const Grammar g{6, 3, 1, 3};
  const TaskSpec tasks = TaskSpec::make_default(g, 4);

  const auto all = RewardSpec::format().prompt_domain(tasks);
  CHECK(all == std::vector<int>{0, 1, 2, 3, 4, 5});
  CHECK(RewardSpec::ground_truth().prompt_domain(tasks) == all);
  CHECK(RewardSpec::random(0.5).prompt_domain(tasks) == all);

  LabelSet labels;
  labels.labels = {{1, g.answer(0)}, {4, g.answer(2)}};
  CHECK(RewardSpec::majority_vote(labels).prompt_domain(tasks) ==
        std::vector<int>{1, 4});
  CHECK(RewardSpec::incorrect_label(labels, {4}).prompt_domain(tasks) ==
        std::vector<int>{4});
  CHECK(RewardSpec::compound(RewardSpec::majority_vote(labels), true)
            .prompt_domain(tasks) == std::vector<int>{1, 4});
}

TEST_CASE("reward validation rejects unusable specs") {
  const Grammar g{4, 3, 1, 3};
  const TaskSpec tasks = TaskSpec::make_default(g, 2);

  CHECK_THROWS_AS(RewardSpec::random(1.5).validate(tasks), ConfigError);
  CHECK_THROWS_AS(RewardSpec::no_repetition(0).validate(tasks), ConfigError);
  CHECK_THROWS_AS(RewardSpec::majority_vote(LabelSet{}).validate(tasks),
                  ConfigError);

  LabelSet bad;
  bad.labels = {{0, Grammar::kPat}};
  CHECK_THROWS_AS(RewardSpec::majority_vote(bad).validate(tasks), ConfigError);

  LabelSet ok;
  ok.labels = {{0, g.answer(1)}};
  CHECK_THROWS_AS(RewardSpec::incorrect_label(ok, {}).validate(tasks),
                  ConfigError);
  CHECK_THROWS_AS(RewardSpec::incorrect_label(ok, {1}).validate(tasks),
                  ConfigError);
  CHECK_NOTHROW(RewardSpec::incorrect_label(ok, {0}).validate(tasks));

  RewardSpec nested = RewardSpec::compound(RewardSpec::format(), true);
  nested.base = std::make_shared<RewardSpec>(
      RewardSpec::compound(RewardSpec::format(), true));
  CHECK_THROWS_AS(nested.validate(tasks), ConfigError);
}

TEST_CASE("majority voting finds the dominant answer per class") {
  const Grammar g{3, 3, 1, 3};
  const TaskSpec tasks = TaskSpec::make_default(g, 3);
  PolicyParams params = PolicyParams::masked_uniform(g);
  // class 0 answers A2 always, class 1 answers A1 with weight 0.9,
  // class 2 never parses
  params.logit(0, 2, 1, g.answer(1)) = 40.0;
  params.logit(0, 2, 2, g.answer(1)) = 40.0;
  params.logit(1, 2, 1, g.answer(0)) = std::log(0.9) + 20.0;
  params.logit(1, 2, 1, g.answer(1)) = std::log(0.1) + 20.0;
  params.logit(1, 2, 2, g.answer(0)) = std::log(0.9) + 20.0;
  params.logit(1, 2, 2, g.answer(1)) = std::log(0.1) + 20.0;
  params.logit(2, 2, 1, g.noans()) = 40.0;
  params.logit(2, 2, 2, g.noans()) = 40.0;

  const LabelSet labels = majority_vote_labels(params, tasks, 101, 5);
  CHECK(labels.labels.at(0) == g.answer(1));
  CHECK(labels.labels.at(1) == g.answer(0));
  CHECK(labels.labels.at(2) == g.answer(0));  // fallback convention
  CHECK(labels.fallback_classes == std::vector<int>{2});
}

TEST_CASE("incorrect-label subset keeps only disagreeing classes") {
  const Grammar g{3, 3, 1, 3};
  const TaskSpec tasks = TaskSpec::make_default(g, 3);

  LabelSet labels;
  labels.labels = {{0, tasks.true_answers[0]},
                   {1, g.answer((1 % g.num_answers + 1) % g.num_answers)},
                   {2, tasks.true_answers[2]}};
  CHECK(incorrect_label_subset(labels, tasks) == std::vector<int>{1});

  LabelSet perfect;
  perfect.labels = {{0, tasks.true_answers[0]}, {1, tasks.true_answers[1]}};
  CHECK_THROWS_AS(incorrect_label_subset(perfect, tasks), ConfigError);
}

TEST_CASE("label sets survive the file round trip") {
  LabelSet labels;
  labels.labels = {{0, 6}, {3, 8}, {17, 7}};
  labels.fallback_classes = {3};

  const auto path =
      std::filesystem::temp_directory_path() / "grpolab_labels_test.json";
  labels.save_file(path.string());
  const LabelSet loaded = LabelSet::load_file(path.string());
  CHECK(loaded.labels == labels.labels);
  CHECK(loaded.fallback_classes == labels.fallback_classes);
  std::filesystem::remove(path);

  CHECK_THROWS_AS(LabelSet::load_file("/nonexistent/labels.json"),
                  ConfigError);
}
