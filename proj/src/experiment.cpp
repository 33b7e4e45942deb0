#include "grpolab/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "grpolab/errors.hpp"
#include "grpolab/rng.hpp"
#include "grpolab/svgplot.hpp"
#include "grpolab/version.hpp"

namespace grpolab {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_text_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  out << content;
  if (!out) throw ConfigError("write failed for '" + path.string() + "'");
}

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return std::string(buf);
}

json eval_to_json(const EvalReport& report) {
  json classes = json::array();
  for (const ClassOutcome& c : report.classes) {
    classes.push_back(json{{"class", c.prompt_class},
                           {"majority_pattern", c.majority_pattern},
                           {"majority_correct", c.majority_correct},
                           {"mean_pattern", c.mean_pattern},
                           {"mean_correct", c.mean_correct},
                           {"mean_parseable", c.mean_parseable}});
  }
  return json{{"step", report.step},
              {"n_samples", report.n_samples},
              {"accuracy", report.accuracy},
              {"pattern_frequency", report.pattern_frequency},
              {"parse_rate", report.parse_rate},
              {"acc_given_pattern", report.acc_given_pattern},
              {"acc_given_lang", report.acc_given_lang},
              {"pattern_count", report.pattern_count},
              {"lang_count", report.lang_count},
              {"classes", classes}};
}

json metrics_to_json(const MetricsRecord& rec) {
  json j{{"step", rec.step},
         {"reward_mean", rec.reward_mean},
         {"clip_upper_frac", rec.clip_upper_frac},
         {"clip_lower_frac", rec.clip_lower_frac},
         {"grad_norm", rec.grad_norm},
         {"avg_token_prob", rec.avg_token_prob}};
  if (rec.accuracy) j["accuracy"] = *rec.accuracy;
  if (rec.pattern_freq) j["pattern_freq"] = *rec.pattern_freq;
  return j;
}

// Builds the runnable RewardSpec from its config form, voting fresh labels
// from the initial policy when no labels file is given. The labels actually
// used are persisted so the run can be reproduced without re-voting.
RewardSpec realize_reward(const RewardConfig& rc, const PolicyParams& initial,
                          const TaskSpec& tasks, std::uint64_t seed,
                          const fs::path& run_dir,
                          std::vector<std::string>& files) {
  auto obtain_labels = [&](const std::string& labels_file) {
    LabelSet labels =
        labels_file.empty()
            ? majority_vote_labels(initial, tasks, 64,
                                   derive_seed(seed, {stream::kLabel}))
            : LabelSet::load_file(labels_file);
    labels.save_file((run_dir / "labels.json").string());
    if (std::find(files.begin(), files.end(), "labels.json") == files.end()) {
      files.push_back("labels.json");
    }
    return labels;
  };
  switch (rc.kind) {
    case RewardKind::kGroundTruth:
      return RewardSpec::ground_truth();
    case RewardKind::kFormat:
      return RewardSpec::format();
    case RewardKind::kRandom:
      return RewardSpec::random(rc.gamma);
    case RewardKind::kPattern:
      return RewardSpec::pattern();
    case RewardKind::kNoRepetition:
      return RewardSpec::no_repetition(rc.max_run);
    case RewardKind::kMajorityVote:
      return RewardSpec::majority_vote(obtain_labels(rc.labels_file));
    case RewardKind::kIncorrectLabel: {
      LabelSet labels = obtain_labels(rc.labels_file);
      std::vector<int> active = incorrect_label_subset(labels, tasks);
      return RewardSpec::incorrect_label(std::move(labels), std::move(active));
    }
    case RewardKind::kCompound: {
      if (!rc.base) throw ConfigError("compound reward needs a 'base'");
      RewardSpec base =
          realize_reward(*rc.base, initial, tasks, seed, run_dir, files);
      return RewardSpec::compound(std::move(base), rc.forbid_pattern);
    }
  }
  throw ConfigError("unhandled reward kind");
}

json flow_to_json(const FlowTable& flow, const ContributionReport& contrib) {
  json cells = json::array();
  for (int id = 0; id < 4; ++id) {
    const FlowCell& cell = flow.cells[static_cast<std::size_t>(id)];
    json c{{"cell", FlowTable::cell_name(id)},
           {"count", cell.count},
           {"acc_before", cell.acc_before},
           {"acc_after", cell.acc_after},
           {"net_correct_delta", cell.net_correct_delta}};
    if (!contrib.no_net_change) {
      c["contribution"] = contrib.contribution[static_cast<std::size_t>(id)];
    }
    cells.push_back(std::move(c));
  }
  return json{{"cells", cells},
              {"total_classes", flow.total_classes},
              {"total_net_delta", flow.total_net_delta},
              {"accuracy_before", flow.accuracy_before},
              {"accuracy_after", flow.accuracy_after},
              {"no_net_change", contrib.no_net_change}};
}

}  // namespace

fs::path resolve_output_dir(const std::string& output_dir) {
  if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
  fs::path out(output_dir);
  if (const char* root = std::getenv(kOutputRootEnv); root && *root) {
    if (out.is_absolute()) return out;
    return fs::path(root) / out;
  }
  return out;
}

void RunManifest::save_file(const fs::path& path) const {
  std::vector<std::string> sorted_files = files;
  std::sort(sorted_files.begin(), sorted_files.end());
  json j{{"name", name},
         {"config_hash", config_hash},
         {"code_version", code_version},
         {"seed", seed},
         {"start_step", start_step},
         {"end_step", end_step},
         {"status", status},
         {"files", sorted_files}};
  write_text_file(path, j.dump(2) + "\n");
}

RunManifest RunManifest::load_file(const fs::path& path) {
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const json::exception& e) {
    throw ConfigError("bad manifest '" + path.string() + "': " + e.what());
  }
  RunManifest m;
  m.name = j.value("name", "");
  m.config_hash = j.value("config_hash", "");
  m.code_version = j.value("code_version", "");
  m.seed = j.value("seed", std::uint64_t{0});
  m.start_step = j.value("start_step", 0);
  m.end_step = j.value("end_step", -1);
  m.status = j.value("status", "");
  m.files = j.value("files", std::vector<std::string>{});
  return m;
}

CalibrateResult calibrate_with_verification(const ExperimentConfig& cfg,
                                            int n_samples) {
  cfg.validate();
  if (n_samples < 1) throw ConfigError("n_samples must be >= 1");
  const TaskSpec tasks = cfg.make_tasks();
  const CalibrationTargets& t = cfg.calibration;

  CalibrateResult result;
  result.params = calibrate_initial_policy(tasks, t);
  result.n_samples = n_samples;

  auto rng = derive_rng(cfg.train.seed, {stream::kMc, 2});
  std::int64_t n_pat = 0, n_lang = 0, n_parse = 0;
  std::int64_t n_correct = 0, n_correct_pat = 0, n_correct_lang = 0;
  std::vector<int> all_classes(static_cast<std::size_t>(
      cfg.grammar.num_classes));
  for (int c = 0; c < cfg.grammar.num_classes; ++c)
    all_classes[static_cast<std::size_t>(c)] = c;
  for (int i = 0; i < n_samples; ++i) {
    const int cls =
        all_classes[rng() % all_classes.size()];
    const TokenSequence seq =
        result.params.sample_sequence(cls, cfg.train.temperature, rng);
    const ParsedOutcome parsed = parse_sequence(tasks, seq);
    if (parsed.uses_pattern) {
      n_pat += 1;
      n_correct_pat += parsed.correct ? 1 : 0;
    } else {
      n_lang += 1;
      n_correct_lang += parsed.correct ? 1 : 0;
    }
    n_parse += parsed.parseable ? 1 : 0;
    n_correct += parsed.correct ? 1 : 0;
  }

  auto check = [&](const std::string& name, double target, double estimate,
                   std::int64_t n) {
    TargetCheck c;
    c.name = name;
    c.target = target;
    c.estimate = estimate;
    c.std_error = n > 0 ? std::sqrt(target * (1.0 - target) /
                                    static_cast<double>(n))
                        : 0.0;
    c.pass = std::abs(estimate - target) <= 3.0 * c.std_error + t.tolerance;
    result.checks.push_back(c);
  };
  const double nd = static_cast<double>(n_samples);
  check("pattern_rate", t.pattern_rate, static_cast<double>(n_pat) / nd,
        n_samples);
  check("acc_given_pattern", t.acc_given_pattern,
        n_pat > 0 ? static_cast<double>(n_correct_pat) /
                        static_cast<double>(n_pat)
                  : 0.0,
        n_pat);
  check("acc_given_lang", t.acc_given_lang,
        n_lang > 0 ? static_cast<double>(n_correct_lang) /
                         static_cast<double>(n_lang)
                   : 0.0,
        n_lang);
  check("parse_rate", t.parse_rate, static_cast<double>(n_parse) / nd,
        n_samples);
  const double implied = t.pattern_rate * t.acc_given_pattern +
                         (1.0 - t.pattern_rate) * t.acc_given_lang;
  check("accuracy", implied, static_cast<double>(n_correct) / nd, n_samples);

  result.all_pass = std::all_of(result.checks.begin(), result.checks.end(),
                                [](const TargetCheck& c) { return c.pass; });
  return result;
}

CalibrateResult run_calibrate(const ExperimentConfig& cfg) {
  CalibrateResult result = calibrate_with_verification(cfg);
  const fs::path dir = resolve_output_dir(cfg.output_dir);
  fs::create_directories(dir);
  result.params.save_file((dir / "policy.txt").string());
  write_text_file(dir / "config.json", cfg.to_json_text());
  json checks = json::array();
  for (const TargetCheck& c : result.checks) {
    checks.push_back(json{{"name", c.name},
                          {"target", c.target},
                          {"estimate", c.estimate},
                          {"std_error", c.std_error},
                          {"pass", c.pass}});
  }
  json report{{"n_samples", result.n_samples},
              {"all_pass", result.all_pass},
              {"checks", checks}};
  write_text_file(dir / "calibration.json", report.dump(2) + "\n");
  return result;
}

RunOutputs run_experiment(const ExperimentConfig& cfg_in,
                          std::optional<std::uint64_t> seed_override,
                          std::optional<fs::path> dir_override) {
  ExperimentConfig cfg = cfg_in;
  if (seed_override) cfg.train.seed = *seed_override;
  cfg.validate();

  const fs::path dir =
      dir_override ? *dir_override : resolve_output_dir(cfg.output_dir);
  fs::create_directories(dir);
  fs::create_directories(dir / "checkpoints");

  const std::string config_text = cfg.to_json_text();
  write_text_file(dir / "config.json", config_text);

  RunManifest manifest;
  manifest.name = cfg.name;
  manifest.config_hash = hash_hex(fnv1a(config_text));
  manifest.code_version = kVersion;
  manifest.seed = cfg.train.seed;
  manifest.start_step = 0;
  manifest.status = "running";
  manifest.files = {"config.json", "manifest.json", "metrics.jsonl",
                    "evals.jsonl", "policy_initial.txt", "policy_final.txt"};

  const TaskSpec tasks = cfg.make_tasks();
  PolicyParams initial =
      cfg.initial_policy.empty()
          ? calibrate_initial_policy(tasks, cfg.calibration)
          : PolicyParams::load_file(cfg.initial_policy);
  if (!(initial.grammar() == cfg.grammar)) {
    throw ConfigError("initial policy grammar does not match the config");
  }
  initial.save_file((dir / "policy_initial.txt").string());

  const RewardSpec reward = realize_reward(cfg.reward, initial, tasks,
                                           cfg.train.seed, dir,
                                           manifest.files);
  manifest.save_file(dir / "manifest.json");

  std::ofstream metrics_out(dir / "metrics.jsonl", std::ios::binary);
  std::ofstream evals_out(dir / "evals.jsonl", std::ios::binary);
  if (!metrics_out || !evals_out) {
    throw ConfigError("cannot open run logs in '" + dir.string() + "'");
  }

  TrainHooks hooks;
  hooks.on_metrics = [&](const MetricsRecord& rec) {
    metrics_out << metrics_to_json(rec).dump() << "\n";
  };
  hooks.on_eval = [&](const EvalReport& report) {
    evals_out << eval_to_json(report).dump() << "\n";
  };
  hooks.on_checkpoint = [&](int step, const PolicyParams& params) {
    if (cfg.checkpoint_cadence <= 0 || step == 0) return;
    if (step % cfg.checkpoint_cadence != 0) return;
    char name[48];
    std::snprintf(name, sizeof name, "checkpoints/step_%06d.txt", step);
    params.save_file((dir / name).string());
    manifest.files.push_back(name);
  };

  RunOutputs out;
  out.dir = dir;
  try {
    out.result = run_training(initial, tasks, reward, cfg.train, hooks);
  } catch (const DivergenceError& e) {
    metrics_out.flush();
    evals_out.flush();
    manifest.end_step = e.step;
    manifest.status = "diverged:" + std::to_string(e.step);
    manifest.save_file(dir / "manifest.json");
    throw;
  }
  metrics_out.flush();
  evals_out.flush();
  out.result.params.save_file((dir / "policy_final.txt").string());

  if (out.result.evals.size() >= 2) {
    out.flow = strategy_flow(out.result.evals.front(),
                             out.result.evals.back());
    out.contribution = partial_contribution(out.flow);
    out.has_flow = true;
    write_text_file(dir / "report.json",
                    flow_to_json(out.flow, out.contribution).dump(2) + "\n");
    manifest.files.push_back("report.json");
  }

  manifest.end_step = out.result.steps_completed;
  manifest.status = "complete";
  manifest.save_file(dir / "manifest.json");
  return out;
}

SweepResult run_sweep(const ExperimentConfig& cfg, const std::string& axis) {
  cfg.validate();
  if (axis != "gamma" && axis != "clip_mode" && axis != "seeds") {
    throw ConfigError("sweep axis must be gamma, clip_mode, or seeds");
  }
  const fs::path base = resolve_output_dir(cfg.output_dir) / ("sweep_" + axis);
  fs::create_directories(base);

  struct CellPlan {
    std::string value;
    std::uint64_t seed;
    ExperimentConfig cfg;
  };
  std::vector<CellPlan> plans;
  if (axis == "gamma") {
    for (double gamma : cfg.sweep.gammas) {
      for (std::uint64_t seed : cfg.seeds) {
        CellPlan plan{format_double(gamma), seed, cfg};
        plan.cfg.reward = RewardConfig{};
        plan.cfg.reward.kind = RewardKind::kRandom;
        plan.cfg.reward.gamma = gamma;
        plans.push_back(std::move(plan));
      }
    }
  } else if (axis == "clip_mode") {
    for (const std::string& mode : cfg.sweep.clip_modes) {
      for (std::uint64_t seed : cfg.seeds) {
        CellPlan plan{mode, seed, cfg};
        plan.cfg.train.clip_mode = parse_clip_mode(mode);
        plans.push_back(std::move(plan));
      }
    }
  } else {
    for (std::uint64_t seed : cfg.seeds) {
      plans.push_back(CellPlan{std::to_string(seed), seed, cfg});
    }
  }

  SweepResult result;
  result.axis = axis;
  result.csv_path = base / "sweep.csv";
  std::ofstream csv(result.csv_path, std::ios::binary);
  if (!csv) throw ConfigError("cannot write '" + result.csv_path.string() + "'");
  csv << "axis,value,seed,step,reward_mean,clip_upper_frac,clip_lower_frac,"
         "grad_norm,avg_token_prob,accuracy,pattern_freq\n";

  result.all_ok = true;
  for (const CellPlan& plan : plans) {
    SweepCell cell;
    cell.value = plan.value;
    cell.seed = plan.seed;
    cell.dir = base / (axis + "_" + plan.value) /
               ("seed_" + std::to_string(plan.seed));
    try {
      const RunOutputs run = run_experiment(plan.cfg, plan.seed, cell.dir);
      for (const MetricsRecord& rec : run.result.metrics) {
        csv << axis << "," << plan.value << "," << plan.seed << ","
            << rec.step << "," << format_double(rec.reward_mean) << ","
            << format_double(rec.clip_upper_frac) << ","
            << format_double(rec.clip_lower_frac) << ","
            << format_double(rec.grad_norm) << ","
            << format_double(rec.avg_token_prob) << ","
            << (rec.accuracy ? format_double(*rec.accuracy) : "") << ","
            << (rec.pattern_freq ? format_double(*rec.pattern_freq) : "")
            << "\n";
      }
      cell.ok = true;
    } catch (const std::exception& e) {
      cell.ok = false;
      cell.error = e.what();
      result.all_ok = false;
    }
    result.cells.push_back(std::move(cell));
  }

  json cells = json::array();
  for (const SweepCell& cell : result.cells) {
    cells.push_back(json{{"value", cell.value},
                         {"seed", cell.seed},
                         {"dir", cell.dir.string()},
                         {"ok", cell.ok},
                         {"error", cell.error}});
  }
  json summary{{"axis", axis}, {"all_ok", result.all_ok}, {"cells", cells}};
  write_text_file(base / "sweep_manifest.json", summary.dump(2) + "\n");
  return result;
}

void render_report(const fs::path& run_dir) {
  const fs::path metrics_path = run_dir / "metrics.jsonl";
  std::ifstream in(metrics_path, std::ios::binary);
  if (!in) {
    throw ConfigError("no metrics.jsonl in '" + run_dir.string() + "'");
  }
  std::vector<double> steps, reward_mean, clip_upper, clip_lower, grad_norm,
      avg_prob;
  std::vector<double> eval_steps, accuracy, pattern_freq;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ConfigError(std::string("bad metrics line: ") + e.what());
    }
    steps.push_back(j.at("step").get<double>());
    reward_mean.push_back(j.at("reward_mean").get<double>());
    clip_upper.push_back(j.at("clip_upper_frac").get<double>());
    clip_lower.push_back(j.at("clip_lower_frac").get<double>());
    grad_norm.push_back(j.at("grad_norm").get<double>());
    avg_prob.push_back(j.at("avg_token_prob").get<double>());
    if (j.contains("accuracy")) {
      eval_steps.push_back(j.at("step").get<double>());
      accuracy.push_back(j.at("accuracy").get<double>());
      pattern_freq.push_back(j.value("pattern_freq", 0.0));
    }
  }

  std::ostringstream csv;
  csv << "step,reward_mean,clip_upper_frac,clip_lower_frac,grad_norm,"
         "avg_token_prob,accuracy,pattern_freq\n";
  std::size_t ei = 0;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    csv << format_double(steps[i]) << "," << format_double(reward_mean[i])
        << "," << format_double(clip_upper[i]) << ","
        << format_double(clip_lower[i]) << "," << format_double(grad_norm[i])
        << "," << format_double(avg_prob[i]) << ",";
    if (ei < eval_steps.size() && eval_steps[ei] == steps[i]) {
      csv << format_double(accuracy[ei]) << ","
          << format_double(pattern_freq[ei]);
      ei += 1;
    } else {
      csv << ",";
    }
    csv << "\n";
  }
  write_text_file(run_dir / "report.csv", csv.str());

  const int kWindow = 10;
  auto with_smoothed = [&](const std::vector<double>& xs,
                           const std::vector<double>& ys,
                           const std::string& label) {
    std::vector<PlotSeries> series;
    series.push_back(PlotSeries{label, xs, ys});
    series.push_back(
        PlotSeries{label + " (smoothed)", xs, moving_average(ys, kWindow)});
    return series;
  };
  std::vector<std::string> written{"report.csv", "avg_token_prob.svg",
                                   "clip_fracs.svg"};
  if (!eval_steps.empty()) {
    write_line_plot((run_dir / "accuracy.svg").string(), "Eval accuracy",
                    "step", "accuracy",
                    with_smoothed(eval_steps, accuracy, "accuracy"));
    write_line_plot((run_dir / "pattern_freq.svg").string(),
                    "Pattern frequency", "step", "pattern frequency",
                    with_smoothed(eval_steps, pattern_freq, "pattern_freq"));
    written.push_back("accuracy.svg");
    written.push_back("pattern_freq.svg");
  }
  write_line_plot((run_dir / "avg_token_prob.svg").string(),
                  "Average token probability", "step", "avg token prob",
                  with_smoothed(steps, avg_prob, "avg_token_prob"));
  std::vector<PlotSeries> clip_series{
      PlotSeries{"clip_upper_frac", steps, clip_upper},
      PlotSeries{"clip_lower_frac", steps, clip_lower}};
  write_line_plot((run_dir / "clip_fracs.svg").string(),
                  "Clip activation fractions", "step", "fraction of tokens",
                  clip_series);

  const fs::path manifest_path = run_dir / "manifest.json";
  if (fs::exists(manifest_path)) {
    RunManifest manifest = RunManifest::load_file(manifest_path);
    for (const std::string& name : written) {
      if (std::find(manifest.files.begin(), manifest.files.end(), name) ==
          manifest.files.end()) {
        manifest.files.push_back(name);
      }
    }
    manifest.save_file(manifest_path);
  }
}

}  // namespace grpolab
