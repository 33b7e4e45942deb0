#pragma once

#include <cstddef>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

#include "grpolab/grammar.hpp"

namespace grpolab {

// One sampled rollout. per_token_probs holds the probability each token had
// under the sampling policy at the sampling temperature.
struct TokenSequence {
  int prompt_class = 0;
  std::vector<int> tokens;
  std::vector<double> per_token_probs;
};

// Generation context: prompt class, position, and the mode state fixed by
// the position-0 token (0 at position 0, then 1 for PAT / 2 for LANG).
struct Context {
  int prompt_class = 0;
  int pos = 0;
  int mode = 0;
};

// Tabular autoregressive softmax policy. Logits live in a dense
// classes x positions x mode-states x vocab table; each position exposes
// only its grammar support, and masked entries carry zero probability and
// zero gradient without any sentinel logit values.
class PolicyParams {
 public:
  PolicyParams() = default;
  explicit PolicyParams(const Grammar& g);

  // Uniform over the support at every context (all logits zero).
  static PolicyParams masked_uniform(const Grammar& g);

  const Grammar& grammar() const { return grammar_; }

  std::size_t index(int c, int pos, int mode, int v) const;
  double logit(int c, int pos, int mode, int v) const;
  double& logit(int c, int pos, int mode, int v);

  std::vector<double>& table() { return logits_; }
  const std::vector<double>& table() const { return logits_; }

  // softmax(logits / tau) over the support at (c, pos, mode); entries off
  // the support stay exactly zero. Every probability used anywhere in the
  // lab (sampling, ratio scoring, gradients) comes through here.
  void row_probs(int c, int pos, int mode, double tau,
                 std::vector<double>& out) const;

  TokenSequence sample_sequence(int prompt_class, double tau,
                                std::mt19937_64& rng) const;

  // Probabilities this policy assigns to an existing sequence's tokens,
  // through the same arithmetic path as sampling. Throws
  // InvalidSequenceError if the sequence does not fit the grammar.
  std::vector<double> sequence_token_probs(const TokenSequence& seq,
                                           double tau) const;

  // d log pi(token | ctx) / d logit(ctx, v) over the support row:
  // (1{v == token} - pi(v | ctx)) / tau. Masked coordinates are zero and
  // are not represented.
  struct RowGrad {
    Context ctx;
    int first = 0;               // vocab index of d[0]
    std::vector<double> d;
  };
  RowGrad grad_log_token_prob(const Context& ctx, int token,
                              double tau = 1.0) const;

  bool all_finite() const;

  // Versioned text table, bit-exact round-trip (hexfloat logits).
  void save(std::ostream& out) const;
  static PolicyParams load(std::istream& in);
  void save_file(const std::string& path) const;
  static PolicyParams load_file(const std::string& path);

  bool operator==(const PolicyParams&) const = default;

 private:
  Grammar grammar_;
  std::vector<double> logits_;
};

// Immutable copy of the parameters taken at a training step; the rollout
// sampler during that step.
struct PolicySnapshot {
  PolicyParams params;
  int step = 0;
};

}  // namespace grpolab
