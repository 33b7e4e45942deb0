#pragma once

#include <string>
#include <utility>

namespace grpolab {

// Token layout for fixed-length sequences:
//   position 0        -> one of the two mode tokens {PAT, LANG}
//   positions 1..L-2  -> filler tokens F1..Fm
//   position L-1      -> answer tokens A1..AK or NOANS
// The vocabulary is laid out so each position's support is one
// contiguous index range.
struct Grammar {
  int num_classes = 1;  // prompt classes
  int seq_len = 3;      // tokens per sequence, >= 3
  int num_fillers = 1;
  int num_answers = 1;

  static constexpr int kPat = 0;
  static constexpr int kLang = 1;
  static constexpr int kNumModeStates = 3;  // start, after PAT, after LANG

  int filler_begin() const { return 2; }
  int answer_begin() const { return 2 + num_fillers; }
  int noans() const { return 2 + num_fillers + num_answers; }
  int vocab_size() const { return 3 + num_fillers + num_answers; }

  int filler(int i) const { return filler_begin() + i; }
  int answer(int k) const { return answer_begin() + k; }

  bool is_mode(int v) const { return v == kPat || v == kLang; }
  bool is_filler(int v) const {
    return v >= filler_begin() && v < answer_begin();
  }
  bool is_answer(int v) const { return v >= answer_begin() && v < noans(); }

  // Half-open support range [first, last) for a position.
  std::pair<int, int> support(int pos) const;

  // Mode state for positions after the first token.
  int mode_state(int first_token) const {
    return first_token == kPat ? 1 : 2;
  }

  std::string token_name(int v) const;

  bool operator==(const Grammar&) const = default;

  // Throws ConfigError on nonsensical dims.
  void validate() const;
};

}  // namespace grpolab
