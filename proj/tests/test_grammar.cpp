#include <doctest.h>

#include "grpolab/errors.hpp"
#include "grpolab/grammar.hpp"

using namespace grpolab;

TEST_CASE("default experiment grammar layout") {
  const Grammar g{32, 5, 4, 8};
  CHECK(g.vocab_size() == 15);
  CHECK(g.filler_begin() == 2);
  CHECK(g.answer_begin() == 6);
  CHECK(g.noans() == 14);
  CHECK(g.filler(0) == 2);
  CHECK(g.filler(3) == 5);
  CHECK(g.answer(0) == 6);
  CHECK(g.answer(7) == 13);
}

TEST_CASE("position supports are contiguous and cover the sequence") {
  const Grammar g{4, 5, 3, 2};
  CHECK(g.support(0) == std::pair<int, int>{0, 2});
  CHECK(g.support(1) == std::pair<int, int>{2, 5});
  CHECK(g.support(2) == std::pair<int, int>{2, 5});
  CHECK(g.support(3) == std::pair<int, int>{2, 5});
  CHECK(g.support(4) == std::pair<int, int>{5, g.vocab_size()});
}

TEST_CASE("token classification partitions the vocabulary") {
  const Grammar g{2, 4, 2, 3};
  int modes = 0, fillers = 0, answers = 0, noans = 0;
  for (int v = 0; v < g.vocab_size(); ++v) {
    modes += g.is_mode(v);
    fillers += g.is_filler(v);
    answers += g.is_answer(v);
    noans += v == g.noans();
    CHECK(g.is_mode(v) + g.is_filler(v) + g.is_answer(v) + (v == g.noans()) ==
          1);
  }
  CHECK(modes == 2);
  CHECK(fillers == 2);
  CHECK(answers == 3);
  CHECK(noans == 1);
}

TEST_CASE("token names are human readable") {
  const Grammar g{1, 4, 2, 2};
  CHECK(g.token_name(Grammar::kPat) == "PAT");
  CHECK(g.token_name(Grammar::kLang) == "LANG");
  CHECK(g.token_name(g.filler(0)) == "F1");
  CHECK(g.token_name(g.filler(1)) == "F2");
  CHECK(g.token_name(g.answer(0)) == "A1");
  CHECK(g.token_name(g.answer(1)) == "A2");
  CHECK(g.token_name(g.noans()) == "NOANS");
}

TEST_CASE("mode state follows the first token") {
  const Grammar g{1, 3, 1, 1};
  CHECK(g.mode_state(Grammar::kPat) == 1);
  CHECK(g.mode_state(Grammar::kLang) == 2);
}

TEST_CASE("grammar validation rejects degenerate shapes") {
  CHECK_THROWS_AS((Grammar{0, 5, 4, 8}.validate()), ConfigError);
  CHECK_THROWS_AS((Grammar{1, 2, 1, 1}.validate()), ConfigError);
  CHECK_THROWS_AS((Grammar{1, 3, 0, 1}.validate()), ConfigError);
  CHECK_THROWS_AS((Grammar{1, 3, 1, 0}.validate()), ConfigError);
  CHECK_NOTHROW((Grammar{1, 3, 1, 1}.validate()));
}
