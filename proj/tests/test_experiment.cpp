#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "grpolab/errors.hpp"
#include "grpolab/experiment.hpp"

using namespace grpolab;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "grpolab_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

int line_count(const fs::path& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  int n = 0;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) n += 1;
  return n;
}

ExperimentConfig tiny_config(const std::string& name) {
  ExperimentConfig cfg;
  cfg.name = name;
  cfg.grammar = Grammar{4, 3, 2, 4};
  cfg.train_classes = 3;
  cfg.reward.kind = RewardKind::kRandom;
  cfg.reward.gamma = 0.5;
  cfg.train.group_size = 4;
  cfg.train.rollout_batch = 4;
  cfg.train.mini_batch = 8;
  cfg.train.learning_rate = 1.0;
  cfg.train.steps = 4;
  cfg.train.eval_cadence = 2;
  cfg.train.eval_samples = 16;
  cfg.train.seed = 1;
  cfg.seeds = {1, 2};
  cfg.checkpoint_cadence = 2;
  cfg.output_dir = (fs::temp_directory_path() / "grpolab_tests" / name /
                    "out").string();
  return cfg;
}

}  // namespace

TEST_CASE("output directories resolve under the environment root") {
  unsetenv("GRPOLAB_OUTPUT_ROOT");
  CHECK(resolve_output_dir("runs/x") == fs::path("runs/x"));

  setenv("GRPOLAB_OUTPUT_ROOT", "/tmp/grpolab_root", 1);
  CHECK(resolve_output_dir("runs/x") ==
        fs::path("/tmp/grpolab_root") / "runs/x");
  CHECK(resolve_output_dir("/abs/path") == fs::path("/abs/path"));
  unsetenv("GRPOLAB_OUTPUT_ROOT");

  CHECK_THROWS_AS(resolve_output_dir(""), ConfigError);
}

TEST_CASE("run manifests survive the file round trip") {
  const fs::path dir = fresh_dir("manifest");
  RunManifest m;
  m.name = "demo";
  m.config_hash = "00ff";
  m.code_version = "0.1.0";
  m.seed = 42;
  m.end_step = 17;
  m.status = "complete";
  m.files = {"b.txt", "a.txt"};
  m.save_file(dir / "manifest.json");

  const RunManifest loaded = RunManifest::load_file(dir / "manifest.json");
  CHECK(loaded.name == "demo");
  CHECK(loaded.config_hash == "00ff");
  CHECK(loaded.seed == 42);
  CHECK(loaded.end_step == 17);
  CHECK(loaded.status == "complete");
  CHECK(loaded.files == std::vector<std::string>{"a.txt", "b.txt"});  // sorted
  CHECK_THROWS_AS(RunManifest::load_file(dir / "missing.json"), ConfigError);
}

TEST_CASE("calibration verification passes on the default targets") {
  const ExperimentConfig cfg;
  const CalibrateResult result = calibrate_with_verification(cfg, 20000);
  REQUIRE(result.checks.size() == 5);
  CHECK(result.checks[0].name == "pattern_rate");
  CHECK(result.checks[1].name == "acc_given_pattern");
  CHECK(result.checks[2].name == "acc_given_lang");
  CHECK(result.checks[3].name == "parse_rate");
  CHECK(result.checks[4].name == "accuracy");
  CHECK(result.checks[4].target == doctest::Approx(0.51835).epsilon(1e-12));
  for (const TargetCheck& c : result.checks) {
    INFO(c.name, ": target ", c.target, " estimate ", c.estimate);
    CHECK(c.pass);
    CHECK(c.std_error > 0.0);
  }
  CHECK(result.all_pass);
  CHECK(result.n_samples == 20000);
}

TEST_CASE("the calibrate command writes its three artifacts") {
  const fs::path dir = fresh_dir("calibrate_cmd");
  ExperimentConfig cfg = tiny_config("calibrate_cmd");
  cfg.output_dir = (dir / "cal").string();
  const CalibrateResult result = run_calibrate(cfg);
  CHECK(result.all_pass);
  CHECK(fs::exists(dir / "cal" / "policy.txt"));
  CHECK(fs::exists(dir / "cal" / "config.json"));
  CHECK(fs::exists(dir / "cal" / "calibration.json"));
  CHECK(PolicyParams::load_file((dir / "cal" / "policy.txt").string()) ==
        result.params);
  CHECK(slurp(dir / "cal" / "config.json") == cfg.to_json_text());
}

TEST_CASE("a run directory holds the full provenance trail") {
  const fs::path dir = fresh_dir("run_full");
  const ExperimentConfig cfg = tiny_config("run_full");
  const RunOutputs out = run_experiment(cfg, std::nullopt, dir / "run");

  CHECK(out.dir == dir / "run");
  CHECK(fs::exists(dir / "run" / "config.json"));
  CHECK(fs::exists(dir / "run" / "policy_initial.txt"));
  CHECK(fs::exists(dir / "run" / "policy_final.txt"));
  CHECK(fs::exists(dir / "run" / "checkpoints" / "step_000002.txt"));
  CHECK(fs::exists(dir / "run" / "checkpoints" / "step_000004.txt"));
  CHECK(fs::exists(dir / "run" / "report.json"));

  const std::string config_text = slurp(dir / "run" / "config.json");
  CHECK(config_text == cfg.to_json_text());

  const RunManifest manifest =
      RunManifest::load_file(dir / "run" / "manifest.json");
  CHECK(manifest.name == "run_full");
  CHECK(manifest.status == "complete");
  CHECK(manifest.end_step == cfg.train.steps);
  CHECK(manifest.seed == 1);
  CHECK(manifest.config_hash == hash_hex(fnv1a(config_text)));
  auto listed = [&](const std::string& f) {
    return std::find(manifest.files.begin(), manifest.files.end(), f) !=
           manifest.files.end();
  };
  CHECK(listed("metrics.jsonl"));
  CHECK(listed("evals.jsonl"));
  CHECK(listed("report.json"));
  CHECK(listed("checkpoints/step_000002.txt"));

  CHECK(line_count(dir / "run" / "metrics.jsonl") == cfg.train.steps);
  CHECK(line_count(dir / "run" / "evals.jsonl") == 3);  // steps 0, 2, 4
  CHECK(out.has_flow);
  CHECK(out.flow.total_classes == 1);  // one eval class in the tiny grammar

  // final policy on disk matches the in-memory result bit for bit
  CHECK(PolicyParams::load_file((dir / "run" / "policy_final.txt").string()) ==
        out.result.params);
}

TEST_CASE("identical configs give byte-identical run logs") {
  const fs::path dir = fresh_dir("run_determinism");
  const ExperimentConfig cfg = tiny_config("run_determinism");
  run_experiment(cfg, std::nullopt, dir / "a");
  run_experiment(cfg, std::nullopt, dir / "b");
  CHECK(slurp(dir / "a" / "metrics.jsonl") == slurp(dir / "b" / "metrics.jsonl"));
  CHECK(slurp(dir / "a" / "evals.jsonl") == slurp(dir / "b" / "evals.jsonl"));
  CHECK(slurp(dir / "a" / "policy_final.txt") ==
        slurp(dir / "b" / "policy_final.txt"));

  run_experiment(cfg, 2, dir / "c");
  CHECK(slurp(dir / "a" / "metrics.jsonl") != slurp(dir / "c" / "metrics.jsonl"));
  const RunManifest seeded = RunManifest::load_file(dir / "c" / "manifest.json");
  CHECK(seeded.seed == 2);
}

TEST_CASE("label-based rewards persist the labels they trained with") {
  const fs::path dir = fresh_dir("run_labels");
  ExperimentConfig cfg = tiny_config("run_labels");
  cfg.reward = RewardConfig{};
  cfg.reward.kind = RewardKind::kMajorityVote;

  run_experiment(cfg, std::nullopt, dir / "vote");
  REQUIRE(fs::exists(dir / "vote" / "labels.json"));
  const LabelSet voted =
      LabelSet::load_file((dir / "vote" / "labels.json").string());
  CHECK(voted.labels.size() == 3);  // one label per train class

  ExperimentConfig reuse = cfg;
  reuse.reward.labels_file = (dir / "vote" / "labels.json").string();
  run_experiment(reuse, std::nullopt, dir / "reuse");
  const LabelSet reused =
      LabelSet::load_file((dir / "reuse" / "labels.json").string());
  CHECK(reused.labels == voted.labels);
}

TEST_CASE("a crafted initial policy feeds the wrong-label pathway") {
  const fs::path dir = fresh_dir("run_incorrect");
  ExperimentConfig cfg = tiny_config("run_incorrect");

  const TaskSpec tasks = cfg.make_tasks();
  PolicyParams initial = calibrate_initial_policy(tasks, cfg.calibration);
  // class 0 now answers A2 deterministically; its true answer is A1
  for (int mode = 1; mode <= 2; ++mode) {
    for (int v = cfg.grammar.answer_begin(); v < cfg.grammar.vocab_size(); ++v)
      initial.logit(0, cfg.grammar.seq_len - 1, mode, v) = 0.0;
    initial.logit(0, cfg.grammar.seq_len - 1, mode, cfg.grammar.answer(1)) =
        40.0;
  }
  const fs::path policy_path = dir / "crafted_policy.txt";
  initial.save_file(policy_path.string());

  cfg.initial_policy = policy_path.string();
  cfg.reward = RewardConfig{};
  cfg.reward.kind = RewardKind::kIncorrectLabel;
  const RunOutputs out = run_experiment(cfg, std::nullopt, dir / "run");
  CHECK(out.result.steps_completed == cfg.train.steps);
  const LabelSet labels =
      LabelSet::load_file((dir / "run" / "labels.json").string());
  CHECK(labels.labels.at(0) == cfg.grammar.answer(1));

  // loading an initial policy with the wrong grammar is refused
  ExperimentConfig wrong = tiny_config("run_incorrect_wrong");
  wrong.grammar.num_answers = 5;
  wrong.initial_policy = policy_path.string();
  CHECK_THROWS_AS(run_experiment(wrong, std::nullopt, dir / "wrong"),
                  ConfigError);
}

TEST_CASE("sweeps lay out one directory per cell and a combined table") {
  const fs::path dir = fresh_dir("sweep");
  ExperimentConfig cfg = tiny_config("sweep");
  cfg.output_dir = (dir / "base").string();
  cfg.sweep.gammas = {0.5, 0.0};
  cfg.seeds = {1, 2};

  const SweepResult result = run_sweep(cfg, "gamma");
  CHECK(result.all_ok);
  CHECK(result.cells.size() == 4);
  for (const SweepCell& cell : result.cells) {
    CHECK(cell.ok);
    CHECK(fs::exists(cell.dir / "metrics.jsonl"));
    const RunManifest m = RunManifest::load_file(cell.dir / "manifest.json");
    CHECK(m.status == "complete");
  }
  CHECK(fs::exists(dir / "base" / "sweep_gamma" / "sweep_manifest.json"));

  std::ifstream csv(result.csv_path);
  REQUIRE(csv.good());
  std::string header;
  std::getline(csv, header);
  CHECK(header ==
        "axis,value,seed,step,reward_mean,clip_upper_frac,clip_lower_frac,"
        "grad_norm,avg_token_prob,accuracy,pattern_freq");
  int rows = 0;
  std::string line;
  while (std::getline(csv, line))
    if (!line.empty()) rows += 1;
  CHECK(rows == 4 * cfg.train.steps);

  const SweepResult by_seed = run_sweep(cfg, "seeds");
  CHECK(by_seed.cells.size() == 2);
  CHECK(by_seed.all_ok);

  CHECK_THROWS_AS(run_sweep(cfg, "learning_rate"), ConfigError);
}

TEST_CASE("report rendering turns run logs into a table and plots") {
  const fs::path dir = fresh_dir("report");
  const ExperimentConfig cfg = tiny_config("report");
  run_experiment(cfg, std::nullopt, dir / "run");
  render_report(dir / "run");

  CHECK(fs::exists(dir / "run" / "report.csv"));
  CHECK(fs::exists(dir / "run" / "accuracy.svg"));
  CHECK(fs::exists(dir / "run" / "pattern_freq.svg"));
  CHECK(fs::exists(dir / "run" / "avg_token_prob.svg"));
  CHECK(fs::exists(dir / "run" / "clip_fracs.svg"));

  const std::string csv = slurp(dir / "run" / "report.csv");
  CHECK(csv.rfind("step,reward_mean,clip_upper_frac,clip_lower_frac,"
                  "grad_norm,avg_token_prob,accuracy,pattern_freq\n",
                  0) == 0);

  const RunManifest manifest =
      RunManifest::load_file(dir / "run" / "manifest.json");
  CHECK(std::find(manifest.files.begin(), manifest.files.end(),
                  "report.csv") != manifest.files.end());

  CHECK_THROWS_AS(render_report(dir / "empty"), ConfigError);
}

TEST_CASE("runs land under the environment output root when it is set") {
  const fs::path root = fresh_dir("env_root");
  setenv("GRPOLAB_OUTPUT_ROOT", root.string().c_str(), 1);
  ExperimentConfig cfg = tiny_config("env_root");
  cfg.output_dir = "nested/run";
  run_experiment(cfg);
  unsetenv("GRPOLAB_OUTPUT_ROOT");
  CHECK(fs::exists(root / "nested/run" / "metrics.jsonl"));
}
