#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstdint>
#include <random>

#include "grpolab/analysis.hpp"
#include "grpolab/config.hpp"
#include "grpolab/errors.hpp"
#include "grpolab/grpo.hpp"
#include "grpolab/reward.hpp"
#include "grpolab/task.hpp"
#include "grpolab/version.hpp"

namespace py = pybind11;

using namespace grpolab;

PYBIND11_MODULE(_core, m) {
  m.doc() = "Desk-scale GRPO laboratory: tabular policy, reward spectrum, "
            "clipping-bias analysis.";
  m.attr("__version__") = kVersion;

  py::register_exception<ConfigError>(m, "ConfigError");
  py::register_exception<CalibrationError>(m, "CalibrationError");
  py::register_exception<InvalidSequenceError>(m, "InvalidSequenceError");
  py::register_exception<DivergenceError>(m, "DivergenceError");

  py::class_<Grammar>(m, "Grammar")
      .def(py::init([](int classes, int seq_len, int fillers, int answers) {
             Grammar g{classes, seq_len, fillers, answers};
             g.validate();
             return g;
           }),
           py::arg("classes") = 32, py::arg("seq_len") = 5,
           py::arg("fillers") = 4, py::arg("answers") = 8)
      .def_readonly("num_classes", &Grammar::num_classes)
      .def_readonly("seq_len", &Grammar::seq_len)
      .def_readonly("num_fillers", &Grammar::num_fillers)
      .def_readonly("num_answers", &Grammar::num_answers)
      .def_property_readonly_static(
          "PAT", [](py::object) { return Grammar::kPat; })
      .def_property_readonly_static(
          "LANG", [](py::object) { return Grammar::kLang; })
      .def("vocab_size", &Grammar::vocab_size)
      .def("filler", &Grammar::filler)
      .def("answer", &Grammar::answer)
      .def("noans", &Grammar::noans)
      .def("support", &Grammar::support)
      .def("token_name", &Grammar::token_name)
      .def("__eq__", [](const Grammar& a, const Grammar& b) { return a == b; });

  py::class_<TokenSequence>(m, "TokenSequence")
      .def(py::init<>())
      .def_readwrite("prompt_class", &TokenSequence::prompt_class)
      .def_readwrite("tokens", &TokenSequence::tokens)
      .def_readwrite("per_token_probs", &TokenSequence::per_token_probs);

  py::class_<PolicyParams>(m, "PolicyParams")
      .def_static("masked_uniform", &PolicyParams::masked_uniform)
      .def_property_readonly(
          "grammar", [](const PolicyParams& p) { return p.grammar(); })
      .def("logit",
           [](const PolicyParams& p, int c, int pos, int mode, int v) {
             return p.logit(c, pos, mode, v);
           })
      .def("set_logit",
           [](PolicyParams& p, int c, int pos, int mode, int v, double x) {
             p.logit(c, pos, mode, v) = x;
           })
      .def("table", [](const PolicyParams& p) { return p.table(); })
      .def("row_probs",
           [](const PolicyParams& p, int c, int pos, int mode, double tau) {
             std::vector<double> out;
             p.row_probs(c, pos, mode, tau, out);
             return out;
           },
           py::arg("c"), py::arg("pos"), py::arg("mode"),
           py::arg("tau") = 1.0)
      .def("sample_sequence",
           [](const PolicyParams& p, int prompt_class, double tau,
              std::uint64_t seed) {
             std::mt19937_64 rng(seed);
             return p.sample_sequence(prompt_class, tau, rng);
           },
           py::arg("prompt_class"), py::arg("tau") = 1.0, py::arg("seed") = 1)
      .def("sequence_token_probs", &PolicyParams::sequence_token_probs,
           py::arg("seq"), py::arg("tau") = 1.0)
      .def("save_file", &PolicyParams::save_file)
      .def_static("load_file", &PolicyParams::load_file)
      .def("__eq__", [](const PolicyParams& a, const PolicyParams& b) {
        return a == b;
      });

  py::class_<TaskSpec>(m, "TaskSpec")
      .def_static("make_default", &TaskSpec::make_default, py::arg("grammar"),
                  py::arg("train_count"))
      .def_readwrite("grammar", &TaskSpec::grammar)
      .def_readwrite("true_answers", &TaskSpec::true_answers)
      .def_readwrite("train_classes", &TaskSpec::train_classes)
      .def_readwrite("eval_classes", &TaskSpec::eval_classes)
      .def("validate", &TaskSpec::validate);

  py::class_<ParsedOutcome>(m, "ParsedOutcome")
      .def_readonly("uses_pattern", &ParsedOutcome::uses_pattern)
      .def_readonly("extracted_answer", &ParsedOutcome::extracted_answer)
      .def_readonly("parseable", &ParsedOutcome::parseable)
      .def_readonly("max_repeat_run", &ParsedOutcome::max_repeat_run)
      .def_readonly("correct", &ParsedOutcome::correct);
  m.def("parse_sequence", &parse_sequence);

  py::class_<CalibrationTargets>(m, "CalibrationTargets")
      .def(py::init([](double pattern_rate, double acc_given_pattern,
                       double acc_given_lang, double parse_rate,
                       double tolerance) {
             return CalibrationTargets{pattern_rate, acc_given_pattern,
                                       acc_given_lang, parse_rate, tolerance};
           }),
           py::arg("pattern_rate") = 0.65,
           py::arg("acc_given_pattern") = 0.609,
           py::arg("acc_given_lang") = 0.350, py::arg("parse_rate") = 0.789,
           py::arg("tolerance") = 0.0)
      .def_readwrite("pattern_rate", &CalibrationTargets::pattern_rate)
      .def_readwrite("acc_given_pattern",
                     &CalibrationTargets::acc_given_pattern)
      .def_readwrite("acc_given_lang", &CalibrationTargets::acc_given_lang)
      .def_readwrite("parse_rate", &CalibrationTargets::parse_rate)
      .def_readwrite("tolerance", &CalibrationTargets::tolerance);
  m.def("calibrate_initial_policy", &calibrate_initial_policy);

  py::class_<ClassOutcome>(m, "ClassOutcome")
      .def_readonly("prompt_class", &ClassOutcome::prompt_class)
      .def_readonly("majority_pattern", &ClassOutcome::majority_pattern)
      .def_readonly("majority_correct", &ClassOutcome::majority_correct)
      .def_readonly("mean_pattern", &ClassOutcome::mean_pattern)
      .def_readonly("mean_correct", &ClassOutcome::mean_correct)
      .def_readonly("mean_parseable", &ClassOutcome::mean_parseable);
  py::class_<EvalReport>(m, "EvalReport")
      .def_readonly("step", &EvalReport::step)
      .def_readonly("n_samples", &EvalReport::n_samples)
      .def_readonly("accuracy", &EvalReport::accuracy)
      .def_readonly("pattern_frequency", &EvalReport::pattern_frequency)
      .def_readonly("parse_rate", &EvalReport::parse_rate)
      .def_readonly("acc_given_pattern", &EvalReport::acc_given_pattern)
      .def_readonly("acc_given_lang", &EvalReport::acc_given_lang)
      .def_readonly("classes", &EvalReport::classes);
  m.def("evaluate_policy", &evaluate_policy, py::arg("params"),
        py::arg("tasks"), py::arg("n_samples"), py::arg("seed"),
        py::arg("tau") = 1.0);

  py::class_<LabelSet>(m, "LabelSet")
      .def(py::init<>())
      .def_readwrite("labels", &LabelSet::labels)
      .def_readwrite("fallback_classes", &LabelSet::fallback_classes)
      .def("save_file", &LabelSet::save_file)
      .def_static("load_file", &LabelSet::load_file);

  py::class_<RewardSpec>(m, "RewardSpec")
      .def_static("ground_truth", &RewardSpec::ground_truth)
      .def_static("format", &RewardSpec::format)
      .def_static("random", &RewardSpec::random, py::arg("gamma"))
      .def_static("pattern", &RewardSpec::pattern)
      .def_static("no_repetition", &RewardSpec::no_repetition,
                  py::arg("max_run") = 10)
      .def_static("majority_vote", &RewardSpec::majority_vote)
      .def_static("incorrect_label", &RewardSpec::incorrect_label)
      .def_static("compound", &RewardSpec::compound, py::arg("base"),
                  py::arg("forbid_pattern") = true)
      .def("prompt_domain", &RewardSpec::prompt_domain)
      .def("validate", &RewardSpec::validate);
  m.def("score_reward",
        [](const RewardSpec& spec, const ParsedOutcome& parsed,
           int prompt_class, std::uint64_t seed) {
          std::mt19937_64 rng(seed);
          return score_reward(spec, parsed, prompt_class, rng);
        });
  m.def("majority_vote_labels", &majority_vote_labels, py::arg("params"),
        py::arg("tasks"), py::arg("n_samples") = 64, py::arg("seed") = 1,
        py::arg("tau") = 1.0);
  m.def("incorrect_label_subset", &incorrect_label_subset);

  py::enum_<ClipMode>(m, "ClipMode")
      .value("standard", ClipMode::kStandard)
      .value("loss_disabled", ClipMode::kLossDisabled)
      .value("batch_matched_minibatch", ClipMode::kBatchMatchedMinibatch)
      .value("batch_matched_rollout", ClipMode::kBatchMatchedRollout);
  py::enum_<LossNorm>(m, "LossNorm")
      .value("per_token_mean", LossNorm::kPerTokenMean)
      .value("per_token_sum", LossNorm::kPerTokenSum);

  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("group_size", &TrainConfig::group_size)
      .def_readwrite("rollout_batch", &TrainConfig::rollout_batch)
      .def_readwrite("mini_batch", &TrainConfig::mini_batch)
      .def_readwrite("eps_clip", &TrainConfig::eps_clip)
      .def_readwrite("kl_lambda", &TrainConfig::kl_lambda)
      .def_readwrite("learning_rate", &TrainConfig::learning_rate)
      .def_readwrite("temperature", &TrainConfig::temperature)
      .def_readwrite("clip_mode", &TrainConfig::clip_mode)
      .def_readwrite("loss_norm", &TrainConfig::loss_norm)
      .def_readwrite("steps", &TrainConfig::steps)
      .def_readwrite("seed", &TrainConfig::seed)
      .def_readwrite("eval_cadence", &TrainConfig::eval_cadence)
      .def_readwrite("eval_samples", &TrainConfig::eval_samples)
      .def("updates_per_phase", &TrainConfig::updates_per_phase)
      .def("validate", &TrainConfig::validate);

  py::class_<AdvantageGroup>(m, "AdvantageGroup")
      .def_readonly("advantages", &AdvantageGroup::advantages)
      .def_readonly("mean", &AdvantageGroup::mean)
      .def_readonly("sigma", &AdvantageGroup::sigma)
      .def_readonly("degenerate", &AdvantageGroup::degenerate);
  m.def("compute_group_advantages", &compute_group_advantages);

  py::class_<MetricsRecord>(m, "MetricsRecord")
      .def_readonly("step", &MetricsRecord::step)
      .def_readonly("reward_mean", &MetricsRecord::reward_mean)
      .def_readonly("clip_upper_frac", &MetricsRecord::clip_upper_frac)
      .def_readonly("clip_lower_frac", &MetricsRecord::clip_lower_frac)
      .def_readonly("grad_norm", &MetricsRecord::grad_norm)
      .def_readonly("avg_token_prob", &MetricsRecord::avg_token_prob)
      .def_readonly("accuracy", &MetricsRecord::accuracy)
      .def_readonly("pattern_freq", &MetricsRecord::pattern_freq);
  py::class_<TrainResult>(m, "TrainResult")
      .def_readonly("params", &TrainResult::params)
      .def_readonly("metrics", &TrainResult::metrics)
      .def_readonly("evals", &TrainResult::evals)
      .def_readonly("steps_completed", &TrainResult::steps_completed);
  m.def(
      "run_training",
      [](const PolicyParams& params, const TaskSpec& tasks,
         const RewardSpec& reward, const TrainConfig& cfg) {
        return run_training(params, tasks, reward, cfg);
      },
      py::arg("params"), py::arg("tasks"), py::arg("reward"),
      py::arg("config"));

  py::class_<AdvantageMc>(m, "AdvantageMc")
      .def_readonly("mean", &AdvantageMc::mean)
      .def_readonly("se", &AdvantageMc::se)
      .def_readonly("trials", &AdvantageMc::trials);
  m.def("mc_expected_advantage", &mc_expected_advantage, py::arg("gamma"),
        py::arg("group_size"), py::arg("trials"), py::arg("seed"));

  py::class_<BiasEstimate>(m, "BiasEstimate")
      .def_readonly("trials", &BiasEstimate::trials)
      .def_readonly("group_size", &BiasEstimate::group_size)
      .def_readonly("gamma", &BiasEstimate::gamma)
      .def_readonly("clipped_mean", &BiasEstimate::clipped_mean)
      .def_readonly("clipped_se", &BiasEstimate::clipped_se)
      .def_readonly("unclipped_mean", &BiasEstimate::unclipped_mean)
      .def_readonly("unclipped_se", &BiasEstimate::unclipped_se);
  m.def("mc_gradient_bias", &mc_gradient_bias, py::arg("pi_theta"),
        py::arg("pi_old"), py::arg("gamma"), py::arg("group_size"),
        py::arg("eps_clip"), py::arg("trials"), py::arg("seed"),
        py::arg("loss_norm") = LossNorm::kPerTokenMean, py::arg("tau") = 1.0);
  m.def("two_token_scenario", &two_token_scenario, py::arg("p_pat"));
  m.def("coordinate_index",
        [](const PolicyParams& p, int c, int pos, int mode, int v) {
          return p.index(c, pos, mode, v);
        });

  py::class_<FlowCell>(m, "FlowCell")
      .def_readonly("count", &FlowCell::count)
      .def_readonly("acc_before", &FlowCell::acc_before)
      .def_readonly("acc_after", &FlowCell::acc_after)
      .def_readonly("net_correct_delta", &FlowCell::net_correct_delta);
  py::class_<FlowTable>(m, "FlowTable")
      .def_readonly("cells", &FlowTable::cells)
      .def_readonly("total_classes", &FlowTable::total_classes)
      .def_readonly("total_net_delta", &FlowTable::total_net_delta)
      .def_readonly("accuracy_before", &FlowTable::accuracy_before)
      .def_readonly("accuracy_after", &FlowTable::accuracy_after)
      .def_static("cell_name", &FlowTable::cell_name);
  py::class_<ContributionReport>(m, "ContributionReport")
      .def_readonly("contribution", &ContributionReport::contribution)
      .def_readonly("denominator", &ContributionReport::denominator)
      .def_readonly("no_net_change", &ContributionReport::no_net_change);
  m.def("strategy_flow", &strategy_flow);
  m.def("partial_contribution", &partial_contribution);
  m.def("moving_average", &moving_average);
}
