#include <doctest.h>

#include <random>
#include <set>
#include <sstream>

#include "bytelm/oracle.hpp"
#include "bytelm/vct.hpp"
#include "helpers.hpp"

using namespace bytelm;
using bytelm::test::data_path;
using bytelm::test::fixture_tokenizer;
using bytelm::test::read_file;

namespace {

std::set<TokenSequence> vct_covering_set(const Tokenizer& tok, ValidityCache& v,
                                         std::string_view prompt) {
  Vct vct(tok, v);
  for (unsigned char b : prompt) vct.feed_byte(b);
  std::set<TokenSequence> out;
  if (!prompt.empty() && vct.trunk_covers_exactly()) out.insert(vct.trunk());
  for (const auto& g : vct.leaf_groups()) {
    TokenSequence base = vct.trunk();
    TokenSequence branch = vct.branch_path(g.node);
    base.insert(base.end(), branch.begin(), branch.end());
    g.mask.for_each_set([&](size_t t) {
      TokenSequence full = base;
      full.push_back(static_cast<TokenId>(t));
      out.insert(std::move(full));
    });
  }
  return out;
}

void check_covering_equality(const Tokenizer& tok, std::string_view prompt) {
  ValidityCache v(tok);
  auto want = oracle::enumerate_valid_coverings(prompt, tok);
  std::set<TokenSequence> got;
  try {
    got = vct_covering_set(tok, v, prompt);
  } catch (const DeadTreeError&) {
    // no token covers some byte: the oracle set must be empty as well
    REQUIRE(want.empty());
    return;
  }
  if (got != want) {
    CAPTURE(prompt);
    std::ostringstream dbg;
    dbg << "want:";
    for (auto& s : want) {
      dbg << " [";
      for (auto t : s) dbg << t << ",";
      dbg << "]";
    }
    dbg << " got:";
    for (auto& s : got) {
      dbg << " [";
      for (auto t : s) dbg << t << ",";
      dbg << "]";
    }
    FAIL_CHECK(dbg.str());
  }
  REQUIRE(got == want);
}

}  // namespace

TEST_CASE("fresh tree state") {
  std::vector<std::string> vocab = {"a", "b", "ab"};
  auto t = Tokenizer::from_parts(vocab, {{0, 1}});
  ValidityCache v(t);
  Vct vct(t, v);
  CHECK(vct.trunk().empty());
  CHECK(vct.bytes_consumed() == 0);
  CHECK(vct.branch_stats().non_trunk_edges == 0);
  CHECK(vct.branch_stats().live_hypotheses == 1);
}

TEST_CASE("single-merge toy: coverings of 'a' are {[a],[ab]}") {
  std::vector<std::string> vocab = {"a", "b", "ab"};
  auto t = Tokenizer::from_parts(vocab, {{0, 1}});
  ValidityCache v(t);
  Vct vct(t, v);
  TokenSequence emitted = vct.feed_byte('a');
  CHECK(emitted.empty());  // still ambiguous between [a] and [ab]
  auto got = vct_covering_set(t, v, "a");
  CHECK(got == std::set<TokenSequence>{{0}, {2}});

  check_covering_equality(t, "ab");
  check_covering_equality(t, "ba");
  check_covering_equality(t, "bab");
}

TEST_CASE("covering-set equality on randomized toys") {
  std::mt19937 rng(31);
  int cases = 0;
  for (uint64_t seed = 0; seed < 60; ++seed) {
    oracle::ToyTokenizerSpec spec;
    spec.seed = seed;
    spec.alphabet = 2 + seed % 4;
    spec.merge_count = 4 + seed % 16;
    if (seed % 4 == 1) spec.rules = RuleSet::cl100k();
    if (seed % 4 == 2) spec.rules = RuleSet::gpt2();
    spec.ignore_merges = (seed % 5 == 0);
    Tokenizer t = oracle::random_toy_tokenizer(spec);
    for (int rep = 0; rep < 6; ++rep) {
      size_t len = 1 + rng() % 12;
      std::string prompt;
      for (size_t i = 0; i < len; ++i) {
        prompt.push_back(static_cast<char>('a' + rng() % spec.alphabet));
      }
      CAPTURE(seed);
      CAPTURE(prompt);
      check_covering_equality(t, prompt);
      ++cases;
    }
  }
  CHECK(cases >= 300);
}

TEST_CASE("covering-set equality on whitespace/digit toys") {
  // Pretokenizer-aware toys: spaces, digits, letters with cl100k rules.
  std::vector<std::string> vocab = {" ", "0", "1", "a", "b", "  ", " a", "ab", "01", "   "};
  auto t = Tokenizer::from_parts(vocab, {{0, 0}, {0, 3}, {3, 4}, {1, 2}, {5, 0}},
                                 RuleSet::cl100k());
  std::mt19937 rng(77);
  const char alphabet[] = {' ', '0', '1', 'a', 'b'};
  for (int rep = 0; rep < 120; ++rep) {
    size_t len = 1 + rng() % 8;
    std::string prompt;
    for (size_t i = 0; i < len; ++i) prompt.push_back(alphabet[rng() % 5]);
    CAPTURE(prompt);
    check_covering_equality(t, prompt);
  }
}

TEST_CASE("future-dependent validity: the two-space regression") {
  std::vector<std::string> vocab = {" ", "0", "a", "  ", " a"};
  auto t = Tokenizer::from_parts(vocab, {{0, 0}, {0, 2}}, RuleSet::cl100k());
  ValidityCache v(t);
  TokenId sp = 0, zero = 1, sp2 = 3;

  // After two spaces, [sp, sp] is not itself a valid covering; [sp2] is.
  auto cov2 = vct_covering_set(t, v, "  ");
  CHECK(cov2.count({sp2}) == 1);
  CHECK(cov2.count({sp, sp}) == 0);
  check_covering_equality(t, "  ");

  // One more byte makes the pair part of the unique covering.
  auto cov3 = vct_covering_set(t, v, "  0");
  CHECK(cov3 == std::set<TokenSequence>{{sp, sp, zero}});
  check_covering_equality(t, "  0");
}

TEST_CASE("streaming equals batch on fixture tokenizers") {
  std::string corpus = read_file(data_path("corpus.txt")).substr(0, 60000);
  for (const char* name : {"gpt2_style", "cl100k_style", "llama3_style"}) {
    const Tokenizer& t = fixture_tokenizer(name);
    ValidityCache v(t);
    Vct vct(t, v);
    TokenSequence streamed;
    for (unsigned char b : corpus) {
      TokenSequence em = vct.feed_byte(b);
      streamed.insert(streamed.end(), em.begin(), em.end());
    }
    size_t mid_emitted = streamed.size();
    TokenSequence fin = vct.finish();
    streamed.insert(streamed.end(), fin.begin(), fin.end());
    CAPTURE(name);
    REQUIRE(streamed == t.encode(corpus));
    CHECK(mid_emitted > 0);
    // trunk stability: the live trunk equals everything streamed out
    REQUIRE(vct.trunk() == streamed);
  }
}

TEST_CASE("streaming equals batch under adversarial chunk boundaries") {
  // Slices cut mid-UTF-8, mid-word, inside whitespace runs: each slice is an
  // independent stream whose emissions must equal the batch encoding.
  std::string corpus = read_file(data_path("corpus.txt")).substr(10000, 3000);
  const Tokenizer& t = fixture_tokenizer("cl100k_style");
  ValidityCache v(t);
  std::mt19937 rng(13);
  size_t pos = 0;
  while (pos < corpus.size()) {
    size_t len = 1 + rng() % 200;
    std::string chunk = corpus.substr(pos, len);
    pos += len;
    Vct vct(t, v);
    TokenSequence streamed;
    for (unsigned char b : chunk) {
      TokenSequence em = vct.feed_byte(b);
      streamed.insert(streamed.end(), em.begin(), em.end());
    }
    TokenSequence fin = vct.finish();
    streamed.insert(streamed.end(), fin.begin(), fin.end());
    REQUIRE(streamed == t.encode(chunk));
  }
}

TEST_CASE("all branch paths are valid sequences") {
  const Tokenizer& t = fixture_tokenizer("gpt2_style");
  ValidityCache v(t);
  Vct vct(t, v);
  std::string text = "The quick brown fox 123 jumps  don've";
  for (unsigned char b : text) vct.feed_byte(b);
  auto groups = vct.leaf_groups();
  REQUIRE(!groups.empty());
  size_t leaves = 0;
  for (const auto& g : groups) {
    TokenSequence base = vct.trunk();
    TokenSequence branch = vct.branch_path(g.node);
    base.insert(base.end(), branch.begin(), branch.end());
    g.mask.for_each_set([&](size_t tk) {
      TokenSequence full = base;
      full.push_back(static_cast<TokenId>(tk));
      ++leaves;
      REQUIRE(v.is_sequence_valid(full));
      // minimal covering: the decoding covers the prompt, the head does not
      std::string d = t.decode(full);
      REQUIRE(d.size() >= text.size());
      REQUIRE(d.compare(0, text.size(), text) == 0);
    });
  }
  CHECK(leaves > 0);
}

TEST_CASE("commit on a forced tree reproduces the batch encoding") {
  std::vector<std::string> vocab = {"a", "b", "ab"};
  auto t = Tokenizer::from_parts(vocab, {{0, 1}});
  ValidityCache v(t);
  Vct vct(t, v);
  for (unsigned char b : std::string_view("abab")) vct.feed_byte(b);
  // the tree is fully determined: the trunk is the unique covering
  REQUIRE(vct.trunk_covers_exactly());
  vct.commit_token(2);
  CHECK(vct.trunk() == TokenSequence{2, 2});
  CHECK(vct.bytes_consumed() == 4);
}

TEST_CASE("commit with overhang consumes the extra bytes") {
  std::vector<std::string> vocab = {"a", "b", "ab", "abb"};
  auto t = Tokenizer::from_parts(vocab, {{0, 1}, {2, 1}});
  ValidityCache v(t);
  Vct vct(t, v);
  vct.feed_byte('a');
  vct.feed_byte('b');
  // leaves: [ab] exact and [abb] overhanging by one byte
  auto groups = vct.leaf_groups();
  bool has_abb = false;
  for (auto& g : groups) {
    if (g.mask.test(3)) has_abb = true;
  }
  REQUIRE(has_abb);
  vct.commit_token(3);
  CHECK(vct.trunk() == TokenSequence{3});
  CHECK(vct.bytes_consumed() == 3);  // overhang byte joined the stream
  CHECK_THROWS_AS(vct.commit_token(1), std::invalid_argument);
}

TEST_CASE("special tokens terminate and restart the tree") {
  const Tokenizer& t = fixture_tokenizer("cl100k_style");
  ValidityCache v(t);
  REQUIRE(t.eos_id().has_value());
  TokenId eos = *t.eos_id();
  Vct vct(t, v);
  std::string part1 = "hello wor";
  TokenSequence streamed;
  for (unsigned char b : part1) {
    TokenSequence em = vct.feed_byte(b);
    streamed.insert(streamed.end(), em.begin(), em.end());
  }
  TokenSequence em = vct.feed_special(eos);
  streamed.insert(streamed.end(), em.begin(), em.end());
  REQUIRE(!streamed.empty());
  CHECK(streamed.back() == eos);
  // emitted text tokens equal the batch encoding of the closed segment
  TokenSequence text_part(streamed.begin(), streamed.end() - 1);
  CHECK(text_part == t.encode(part1));
  // the tree restarts: new text accumulates normally
  for (unsigned char b : std::string_view("ld")) vct.feed_byte(b);
  TokenSequence fin = vct.finish();
  TokenSequence want = t.encode(part1);
  want.push_back(eos);
  TokenSequence enc_ld = t.encode("ld");
  want.insert(want.end(), enc_ld.begin(), enc_ld.end());
  CHECK(vct.trunk() == want);
}

TEST_CASE("dead tree on bytes outside the toy alphabet") {
  std::vector<std::string> vocab = {"a", "b", "ab"};
  auto t = Tokenizer::from_parts(vocab, {{0, 1}});
  ValidityCache v(t);
  Vct vct(t, v);
  vct.feed_byte('a');
  CHECK_THROWS_AS(vct.feed_byte('z'), DeadTreeError);
}

TEST_CASE("branch stats stay bounded across a corpus sweep") {
  std::string corpus = read_file(data_path("corpus.txt")).substr(0, 10000);
  const Tokenizer& t = fixture_tokenizer("cl100k_style");
  ValidityCache v(t);
  Vct vct(t, v);
  size_t max_edges = 0, max_hypos = 0, max_depth = 0;
  for (unsigned char b : corpus) {
    vct.feed_byte(b);
    auto st = vct.branch_stats();
    max_edges = std::max(max_edges, st.non_trunk_edges);
    max_hypos = std::max(max_hypos, st.live_hypotheses);
    max_depth = std::max(max_depth, st.deepest_branch);
  }
  // regression pins: measured bounds for this tokenizer/corpus, plus slack
  CHECK(max_edges <= 64);
  CHECK(max_hypos <= 6);
  CHECK(max_depth <= 16);
}

TEST_CASE("added tokens appear as forced nodes and as covering leaves") {
  const Tokenizer& t = fixture_tokenizer("llama3_style");
  ValidityCache v(t);
  auto tool = t.token_of_bytes("<tool>");
  REQUIRE(tool.has_value());

  // Complete added token inside the prompt: forced into the trunk.
  {
    Vct vct(t, v);
    std::string text = "x<tool>y";
    TokenSequence streamed;
    for (unsigned char b : text) {
      auto em = vct.feed_byte(b);
      streamed.insert(streamed.end(), em.begin(), em.end());
    }
    auto fin = vct.finish();
    streamed.insert(streamed.end(), fin.begin(), fin.end());
    REQUIRE(streamed == t.encode(text));
    bool has_tool = false;
    for (TokenId id : streamed) has_tool |= (id == *tool);
    CHECK(has_tool);
  }

  // Partial added token at the frontier: the added id is a covering leaf.
  {
    Vct vct(t, v);
    for (unsigned char b : std::string_view("x<too")) vct.feed_byte(b);
    auto groups = vct.leaf_groups();
    bool tool_leaf = false;
    for (auto& g : groups) {
      if (g.mask.test(*tool)) tool_leaf = true;
    }
    CHECK(tool_leaf);
  }
}

TEST_CASE("dump renders trunk and branches") {
  std::vector<std::string> vocab = {"a", "b", "ab"};
  auto t = Tokenizer::from_parts(vocab, {{0, 1}});
  ValidityCache v(t);
  Vct vct(t, v);
  vct.feed_byte('a');
  std::ostringstream os;
  vct.dump(os);
  CHECK(os.str().find("branches") != std::string::npos);
}
