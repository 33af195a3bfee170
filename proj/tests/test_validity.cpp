#include <doctest.h>

#include <random>

#include "bytelm/oracle.hpp"
#include "bytelm/validity.hpp"
#include "helpers.hpp"

using namespace bytelm;
using bytelm::test::fixture_tokenizer;

namespace {

// The definitional answer, straight from the encoder.
bool pair_by_encode(const Tokenizer& t, TokenId a, TokenId b) {
  TokenSequence pair{a, b};
  return t.encode(t.decode(pair)) == pair;
}

Tokenizer space_toy() {
  // cl100k-style rules over a vocabulary containing " ", "0", "a", "  ",
  // " a": the future-dependent validity regression substrate.
  std::vector<std::string> vocab = {" ", "0", "a", "  ", " a"};
  return Tokenizer::from_parts(vocab, {{0, 0}, {0, 2}}, RuleSet::cl100k());
}

}  // namespace

TEST_CASE("single-merge toy pair validity") {
  std::vector<std::string> vocab = {"a", "b", "ab"};
  auto t = Tokenizer::from_parts(vocab, {{0, 1}});
  ValidityCache v(t);
  CHECK_FALSE(v.is_pair_valid(0, 1));  // (a,b) merges across the boundary
  CHECK(v.is_pair_valid(1, 0));        // (b,a) has no crossing merge
  CHECK(v.is_pair_valid(2, 2));        // (ab,ab)

  auto none = Tokenizer::from_parts(std::vector<std::string>{"a", "b"}, {});
  ValidityCache vn(none);
  CHECK(vn.is_pair_valid(0, 0));  // no merge can cross
}

TEST_CASE("successor masks equal the brute-force matrix on a toy vocabulary") {
  std::vector<std::string> vocab = {"a", "b", "ab", "ba"};
  auto t = Tokenizer::from_parts(vocab, {{0, 1}, {1, 0}});
  ValidityCache v(t);
  for (TokenId a = 0; a < 4; ++a) {
    const Bitset& row = v.valid_successors(a);
    const Bitset& again = v.valid_successors(a);
    CHECK(row == again);  // memoized, deterministic
    for (TokenId b = 0; b < 4; ++b) {
      CAPTURE(a);
      CAPTURE(b);
      REQUIRE(row.test(b) == pair_by_encode(t, a, b));
    }
  }
}

TEST_CASE("pair validity equals the encode-decode definition exhaustively") {
  for (uint64_t seed = 0; seed < 40; ++seed) {
    oracle::ToyTokenizerSpec spec;
    spec.seed = seed;
    spec.alphabet = 3 + seed % 5;
    spec.merge_count = 4 + seed % 20;
    if (seed % 3 == 1) spec.rules = RuleSet::cl100k();
    if (seed % 3 == 2) spec.rules = RuleSet::gpt2();
    spec.ignore_merges = (seed % 5 == 0);
    Tokenizer t = oracle::random_toy_tokenizer(spec);
    ValidityCache v(t);
    for (TokenId a = 0; static_cast<size_t>(a) < t.vocab_size(); ++a) {
      for (TokenId b = 0; static_cast<size_t>(b) < t.vocab_size(); ++b) {
        CAPTURE(seed);
        CAPTURE(t.token_bytes(a));
        CAPTURE(t.token_bytes(b));
        REQUIRE(v.is_pair_valid(a, b) == pair_by_encode(t, a, b));
      }
    }
  }
}

TEST_CASE("pair validity sampled against real tokenizer fixtures") {
  std::mt19937 rng(5);
  for (const char* name : {"gpt2_style", "cl100k_style", "llama3_style"}) {
    const Tokenizer& t = fixture_tokenizer(name);
    ValidityCache v(t);
    std::uniform_int_distribution<TokenId> d(0, static_cast<TokenId>(t.vocab_size()) - 1);
    for (int i = 0; i < 4000; ++i) {
      TokenId a = d(rng), b = d(rng);
      if (t.is_special(a) || t.is_special(b)) continue;
      if (t.token_bytes(a).empty() || t.token_bytes(b).empty()) continue;
      CAPTURE(name);
      CAPTURE(t.token_bytes(a));
      CAPTURE(t.token_bytes(b));
      REQUIRE(v.is_pair_valid(a, b) == pair_by_encode(t, a, b));
    }
  }
}

TEST_CASE("pair check touches at most 2*depth+1 trajectory entries") {
  const Tokenizer& t = fixture_tokenizer("cl100k_style");
  ValidityCache v(t);
  std::mt19937 rng(6);
  std::uniform_int_distribution<TokenId> d(0, static_cast<TokenId>(t.vocab_size()) - 1);
  for (int i = 0; i < 2000; ++i) {
    TokenId a = d(rng), b = d(rng);
    if (t.is_special(a) || t.is_special(b)) continue;
    v.bpe_pair_valid(a, b);
    CHECK(v.last_pair_steps() <= 2 * t.max_merge_depth() + 1);
  }
}

TEST_CASE("special tokens restart the tree") {
  const Tokenizer& t = fixture_tokenizer("cl100k_style");
  ValidityCache v(t);
  REQUIRE(t.eos_id().has_value());
  const Bitset& row = v.valid_successors(*t.eos_id());
  CHECK(row == v.standalone_mask());
  CHECK(row.count() > 0);
}

TEST_CASE("tokens_with_prefix") {
  std::vector<std::string> vocab = {"a", "b", "ab"};
  auto t = Tokenizer::from_parts(vocab, {{0, 1}});
  ValidityCache v(t);
  Bitset m = v.tokens_with_prefix("a");
  CHECK(m.test(0));
  CHECK(m.test(2));
  CHECK_FALSE(m.test(1));
  CHECK_FALSE(v.tokens_with_prefix("abc").any());  // longer than every token

  const Tokenizer& g = fixture_tokenizer("gpt2_style");
  ValidityCache vg(g);
  for (std::string p : {std::string(" th"), std::string("the w"), std::string("1")}) {
    Bitset got = vg.tokens_with_prefix(p);
    Bitset want(g.vocab_size());
    for (TokenId id = 0; static_cast<size_t>(id) < g.vocab_size(); ++id) {
      if (g.is_special(id) || g.token_bytes(id).empty()) continue;
      const std::string& tb = g.token_bytes(id);
      if (tb.size() >= p.size() && tb.compare(0, p.size(), p) == 0) want.set(id);
    }
    CAPTURE(p);
    REQUIRE(got == want);
  }
}

TEST_CASE("sequence validity is not prefix-closed") {
  Tokenizer t = space_toy();
  ValidityCache v(t);
  TokenId sp = *t.token_of_bytes(" ");
  TokenId zero = *t.token_of_bytes("0");
  TokenId sp2 = *t.token_of_bytes("  ");
  CHECK_FALSE(v.is_sequence_valid({sp, sp}));
  CHECK(v.is_sequence_valid({sp, sp, zero}));
  CHECK(v.is_sequence_valid({sp2}));
  CHECK(v.is_sequence_valid({}));
  CHECK_FALSE(v.is_pair_valid(sp, sp));
}

TEST_CASE("sequence validity matches the fixed-point test on random toys") {
  std::mt19937 rng(7);
  for (uint64_t seed = 100; seed < 130; ++seed) {
    oracle::ToyTokenizerSpec spec;
    spec.seed = seed;
    spec.alphabet = 4;
    spec.merge_count = 10;
    Tokenizer t = oracle::random_toy_tokenizer(spec);
    ValidityCache v(t);
    std::uniform_int_distribution<TokenId> d(0, static_cast<TokenId>(t.vocab_size()) - 1);
    for (int i = 0; i < 300; ++i) {
      TokenSequence seq(rng() % 8);
      for (TokenId& x : seq) x = d(rng);
      CAPTURE(seed);
      REQUIRE(v.is_sequence_valid(seq) == (t.encode(t.decode(seq)) == seq));
    }
  }
}

TEST_CASE("ignore_merges affects pair validity through whole-pretoken hits") {
  // vocab has "ab" but no merge; with ignore_merges, [a,b] cannot stand
  // because encode("ab") returns the vocabulary hit.
  std::vector<std::string> vocab = {"a", "b", "ab"};
  auto t = Tokenizer::from_parts(vocab, {}, RuleSet::none(), /*ignore_merges=*/true);
  ValidityCache v(t);
  CHECK_FALSE(v.is_pair_valid(0, 1));
  CHECK(v.is_sequence_valid({2}));       // the vocabulary hit itself
  CHECK_FALSE(v.is_sequence_valid({0, 1}));
}
