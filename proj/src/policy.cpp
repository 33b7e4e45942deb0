#include "grpolab/policy.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "grpolab/errors.hpp"
#include "grpolab/rng.hpp"

namespace grpolab {

PolicyParams::PolicyParams(const Grammar& g) : grammar_(g) {
  g.validate();
  logits_.assign(static_cast<std::size_t>(g.num_classes) * g.seq_len *
                     Grammar::kNumModeStates * g.vocab_size(),
                 0.0);
}

PolicyParams PolicyParams::masked_uniform(const Grammar& g) {
  return PolicyParams(g);
}

std::size_t PolicyParams::index(int c, int pos, int mode, int v) const {
  return ((static_cast<std::size_t>(c) * grammar_.seq_len + pos) *
              Grammar::kNumModeStates +
          mode) *
             grammar_.vocab_size() +
         v;
}

double PolicyParams::logit(int c, int pos, int mode, int v) const {
  return logits_[index(c, pos, mode, v)];
}

double& PolicyParams::logit(int c, int pos, int mode, int v) {
  return logits_[index(c, pos, mode, v)];
}

void PolicyParams::row_probs(int c, int pos, int mode, double tau,
                             std::vector<double>& out) const {
  const auto [first, last] = grammar_.support(pos);
  out.assign(grammar_.vocab_size(), 0.0);
  double zmax = logit(c, pos, mode, first);
  for (int v = first + 1; v < last; ++v)
    zmax = std::max(zmax, logit(c, pos, mode, v));
  double sum = 0.0;
  for (int v = first; v < last; ++v) {
    const double e = std::exp((logit(c, pos, mode, v) - zmax) / tau);
    out[v] = e;
    sum += e;
  }
  for (int v = first; v < last; ++v) out[v] /= sum;
}

namespace {

int context_mode(const Grammar& g, int pos, int first_token) {
  return pos == 0 ? 0 : g.mode_state(first_token);
}

}  // namespace

TokenSequence PolicyParams::sample_sequence(int prompt_class, double tau,
                                            std::mt19937_64& rng) const {
  TokenSequence seq;
  seq.prompt_class = prompt_class;
  seq.tokens.reserve(grammar_.seq_len);
  seq.per_token_probs.reserve(grammar_.seq_len);
  std::vector<double> probs;
  for (int pos = 0; pos < grammar_.seq_len; ++pos) {
    const int mode = context_mode(grammar_, pos, pos == 0 ? 0 : seq.tokens[0]);
    row_probs(prompt_class, pos, mode, tau, probs);
    const auto [first, last] = grammar_.support(pos);
    const double u = uniform01(rng);
    int chosen = last - 1;
    double cum = 0.0;
    for (int v = first; v < last; ++v) {
      cum += probs[v];
      if (u < cum) {
        chosen = v;
        break;
      }
    }
    seq.tokens.push_back(chosen);
    seq.per_token_probs.push_back(probs[chosen]);
  }
  return seq;
}

std::vector<double> PolicyParams::sequence_token_probs(
    const TokenSequence& seq, double tau) const {
  if (seq.prompt_class < 0 || seq.prompt_class >= grammar_.num_classes)
    throw InvalidSequenceError("sequence_token_probs: prompt class out of range");
  if (static_cast<int>(seq.tokens.size()) != grammar_.seq_len)
    throw InvalidSequenceError("sequence_token_probs: wrong sequence length");
  std::vector<double> result(grammar_.seq_len);
  std::vector<double> probs;
  for (int pos = 0; pos < grammar_.seq_len; ++pos) {
    const auto [first, last] = grammar_.support(pos);
    const int v = seq.tokens[pos];
    if (v < first || v >= last)
      throw InvalidSequenceError("sequence_token_probs: token " +
                                 grammar_.token_name(v) +
                                 " not in support at position " +
                                 std::to_string(pos));
    const int mode = context_mode(grammar_, pos, seq.tokens[0]);
    row_probs(seq.prompt_class, pos, mode, tau, probs);
    result[pos] = probs[v];
  }
  return result;
}

PolicyParams::RowGrad PolicyParams::grad_log_token_prob(const Context& ctx,
                                                        int token,
                                                        double tau) const {
  const auto [first, last] = grammar_.support(ctx.pos);
  if (token < first || token >= last)
    throw InvalidSequenceError("grad_log_token_prob: token " +
                               grammar_.token_name(token) +
                               " not in support at position " +
                               std::to_string(ctx.pos));
  std::vector<double> probs;
  row_probs(ctx.prompt_class, ctx.pos, ctx.mode, tau, probs);
  RowGrad g;
  g.ctx = ctx;
  g.first = first;
  g.d.resize(last - first);
  for (int v = first; v < last; ++v)
    g.d[v - first] = ((v == token ? 1.0 : 0.0) - probs[v]) / tau;
  return g;
}

bool PolicyParams::all_finite() const {
  for (double z : logits_)
    if (!std::isfinite(z)) return false;
  return true;
}

namespace {

constexpr const char* kMagic = "grpolab-policy v1";

std::string hexfloat(double x) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%a", x);
  return buf;
}

}  // namespace

void PolicyParams::save(std::ostream& out) const {
  out << kMagic << "\n";
  out << "dims " << grammar_.num_classes << " " << grammar_.seq_len << " "
      << grammar_.num_fillers << " " << grammar_.num_answers << "\n";
  const int v = grammar_.vocab_size();
  const std::size_t rows = logits_.size() / v;
  for (std::size_t r = 0; r < rows; ++r) {
    for (int i = 0; i < v; ++i) {
      if (i) out << " ";
      out << hexfloat(logits_[r * v + i]);
    }
    out << "\n";
  }
}

PolicyParams PolicyParams::load(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kMagic)
    throw ConfigError("policy file: bad magic line");
  Grammar g;
  std::string tag;
  in >> tag >> g.num_classes >> g.seq_len >> g.num_fillers >> g.num_answers;
  if (!in || tag != "dims") throw ConfigError("policy file: bad dims line");
  PolicyParams params(g);
  for (double& z : params.logits_) {
    std::string tok;
    if (!(in >> tok)) throw ConfigError("policy file: truncated logit table");
    char* end = nullptr;
    z = std::strtod(tok.c_str(), &end);
    if (end == tok.c_str() || *end != '\0')
      throw ConfigError("policy file: bad logit value '" + tok + "'");
  }
  std::string extra;
  if (in >> extra) throw ConfigError("policy file: trailing data");
  return params;
}

void PolicyParams::save_file(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  save(out);
  if (!out.good()) throw ConfigError("failed writing " + path);
}

PolicyParams PolicyParams::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path);
  return load(in);
}

}  // namespace grpolab
