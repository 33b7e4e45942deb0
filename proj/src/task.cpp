#include "grpolab/task.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "grpolab/errors.hpp"
#include "grpolab/rng.hpp"

namespace grpolab {

TaskSpec TaskSpec::make_default(const Grammar& g, int train_count) {
  TaskSpec t;
  t.grammar = g;
  t.true_answers.resize(g.num_classes);
  for (int c = 0; c < g.num_classes; ++c)
    t.true_answers[c] = g.answer(c % g.num_answers);
  for (int c = 0; c < g.num_classes; ++c)
    (c < train_count ? t.train_classes : t.eval_classes).push_back(c);
  t.validate();
  return t;
}

void TaskSpec::validate() const {
  grammar.validate();
  if (static_cast<int>(true_answers.size()) != grammar.num_classes)
    throw ConfigError("tasks: need one true answer per class");
  for (int a : true_answers)
    if (!grammar.is_answer(a))
      throw ConfigError("tasks: true answer is not an answer token");
  std::vector<char> seen(grammar.num_classes, 0);
  auto mark = [&](const std::vector<int>& classes, const char* name) {
    for (int c : classes) {
      if (c < 0 || c >= grammar.num_classes)
        throw ConfigError(std::string("tasks: ") + name + " class out of range");
      if (seen[c]++)
        throw ConfigError("tasks: train/eval split is not disjoint");
    }
  };
  mark(train_classes, "train");
  mark(eval_classes, "eval");
  for (char s : seen)
    if (!s) throw ConfigError("tasks: split does not cover all classes");
}

ParsedOutcome parse_sequence(const TaskSpec& tasks, const TokenSequence& seq) {
  const Grammar& g = tasks.grammar;
  if (static_cast<int>(seq.tokens.size()) != g.seq_len)
    throw InvalidSequenceError("parse_sequence: wrong sequence length");
  if (seq.prompt_class < 0 || seq.prompt_class >= g.num_classes)
    throw InvalidSequenceError("parse_sequence: prompt class out of range");

  ParsedOutcome out;
  out.uses_pattern = seq.tokens[0] == Grammar::kPat;

  out.max_repeat_run = 1;
  int run = 1;
  for (int pos = 2; pos < g.seq_len - 1; ++pos) {
    run = seq.tokens[pos] == seq.tokens[pos - 1] ? run + 1 : 1;
    out.max_repeat_run = std::max(out.max_repeat_run, run);
  }

  const int last = seq.tokens[g.seq_len - 1];
  if (g.is_answer(last)) {
    out.extracted_answer = last;
    out.parseable = true;
    out.correct = last == tasks.true_answers[seq.prompt_class];
  }
  return out;
}

namespace {

// A logit this far below the row maximum underflows to probability zero
// in the softmax, so zero-mass targets need no infinities.
constexpr double kZeroMassLogit = -1.0e4;

double target_logit(double p) {
  return p > 0.0 ? std::log(p) : kZeroMassLogit;
}

}  // namespace

PolicyParams calibrate_initial_policy(const TaskSpec& tasks,
                                      const CalibrationTargets& t) {
  tasks.validate();
  const Grammar& g = tasks.grammar;

  auto in_unit = [](double x) { return x >= 0.0 && x <= 1.0; };
  if (!in_unit(t.pattern_rate))
    throw CalibrationError("calibration: pattern_rate outside [0, 1]");
  if (!in_unit(t.acc_given_pattern))
    throw CalibrationError("calibration: acc_given_pattern outside [0, 1]");
  if (!in_unit(t.acc_given_lang))
    throw CalibrationError("calibration: acc_given_lang outside [0, 1]");
  if (!in_unit(t.parse_rate))
    throw CalibrationError("calibration: parse_rate outside [0, 1]");
  if (t.acc_given_pattern > t.parse_rate)
    throw CalibrationError(
        "calibration infeasible: acc_given_pattern exceeds parse_rate");
  if (t.acc_given_lang > t.parse_rate)
    throw CalibrationError(
        "calibration infeasible: acc_given_lang exceeds parse_rate");
  if (g.num_answers == 1) {
    if (t.acc_given_pattern < t.parse_rate)
      throw CalibrationError(
          "calibration infeasible: acc_given_pattern below parse_rate with "
          "no wrong-answer tokens");
    if (t.acc_given_lang < t.parse_rate)
      throw CalibrationError(
          "calibration infeasible: acc_given_lang below parse_rate with "
          "no wrong-answer tokens");
  }

  PolicyParams params(g);
  for (int c = 0; c < g.num_classes; ++c) {
    params.logit(c, 0, 0, Grammar::kPat) = target_logit(t.pattern_rate);
    params.logit(c, 0, 0, Grammar::kLang) = target_logit(1.0 - t.pattern_rate);

    for (int mode = 1; mode <= 2; ++mode) {
      const double acc = mode == 1 ? t.acc_given_pattern : t.acc_given_lang;
      const double wrong =
          g.num_answers > 1 ? (t.parse_rate - acc) / (g.num_answers - 1) : 0.0;
      const int a_true = tasks.true_answers[c];
      for (int k = 0; k < g.num_answers; ++k) {
        const int a = g.answer(k);
        params.logit(c, g.seq_len - 1, mode, a) =
            target_logit(a == a_true ? acc : wrong);
      }
      params.logit(c, g.seq_len - 1, mode, g.noans()) =
          target_logit(1.0 - t.parse_rate);
    }
  }
  return params;
}

EvalReport evaluate_policy(const PolicyParams& params, const TaskSpec& tasks,
                           int n_samples, std::uint64_t seed, double tau) {
  tasks.validate();
  if (n_samples < 1) throw ConfigError("evaluate_policy: n_samples must be >= 1");
  if (tasks.eval_classes.empty())
    throw ConfigError("evaluate_policy: eval split is empty");

  std::vector<int> classes = tasks.eval_classes;
  std::sort(classes.begin(), classes.end());

  EvalReport report;
  report.n_samples = n_samples;
  std::int64_t correct = 0, pattern = 0, parseable = 0;
  std::int64_t correct_pat = 0, correct_lang = 0;

  for (int c : classes) {
    auto rng = derive_rng(seed, {stream::kEval, static_cast<std::uint64_t>(c)});
    ClassOutcome out;
    out.prompt_class = c;
    int c_correct = 0, c_pattern = 0, c_parse = 0;
    for (int i = 0; i < n_samples; ++i) {
      const TokenSequence seq = params.sample_sequence(c, tau, rng);
      const ParsedOutcome parsed = parse_sequence(tasks, seq);
      c_correct += parsed.correct;
      c_pattern += parsed.uses_pattern;
      c_parse += parsed.parseable;
      if (parsed.uses_pattern)
        correct_pat += parsed.correct;
      else
        correct_lang += parsed.correct;
    }
    out.mean_correct = static_cast<double>(c_correct) / n_samples;
    out.mean_pattern = static_cast<double>(c_pattern) / n_samples;
    out.mean_parseable = static_cast<double>(c_parse) / n_samples;
    out.majority_pattern = 2 * c_pattern >= n_samples;
    out.majority_correct = 2 * c_correct >= n_samples;
    report.classes.push_back(out);
    correct += c_correct;
    pattern += c_pattern;
    parseable += c_parse;
  }

  const std::int64_t total =
      static_cast<std::int64_t>(classes.size()) * n_samples;
  report.pattern_count = pattern;
  report.lang_count = total - pattern;
  report.accuracy = static_cast<double>(correct) / total;
  report.pattern_frequency = static_cast<double>(pattern) / total;
  report.parse_rate = static_cast<double>(parseable) / total;
  report.acc_given_pattern =
      pattern > 0 ? static_cast<double>(correct_pat) / pattern : 0.0;
  report.acc_given_lang =
      report.lang_count > 0 ? static_cast<double>(correct_lang) / report.lang_count
                            : 0.0;
  return report;
}

}  // namespace grpolab
