#include "grpolab/grammar.hpp"

#include "grpolab/errors.hpp"

namespace grpolab {

std::pair<int, int> Grammar::support(int pos) const {
  if (pos == 0) return {0, 2};
  if (pos == seq_len - 1) return {answer_begin(), vocab_size()};
  return {filler_begin(), answer_begin()};
}

std::string Grammar::token_name(int v) const {
  if (v == kPat) return "PAT";
  if (v == kLang) return "LANG";
  if (is_filler(v)) return "F" + std::to_string(v - filler_begin() + 1);
  if (is_answer(v)) return "A" + std::to_string(v - answer_begin() + 1);
  if (v == noans()) return "NOANS";
  return "?" + std::to_string(v);
}

void Grammar::validate() const {
  if (num_classes < 1) throw ConfigError("grammar: num_classes must be >= 1");
  if (seq_len < 3) throw ConfigError("grammar: seq_len must be >= 3");
  if (num_fillers < 1) throw ConfigError("grammar: num_fillers must be >= 1");
  if (num_answers < 1) throw ConfigError("grammar: num_answers must be >= 1");
}

}  // namespace grpolab
