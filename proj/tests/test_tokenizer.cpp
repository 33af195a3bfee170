#include <doctest.h>

#include <random>

#include <nlohmann/json.hpp>

#include "bytelm/tokenizer.hpp"
#include "helpers.hpp"

using namespace bytelm;
using bytelm::test::data_path;
using bytelm::test::fixture_tokenizer;
using bytelm::test::read_file;
using bytelm::test::read_ids;
using bytelm::test::toy_tokenizer;

TEST_CASE("byte-level unit mapping round trips") {
  for (int b = 0; b < 256; ++b) {
    auto back = unit_to_byte(byte_to_unit(static_cast<uint8_t>(b)));
    REQUIRE(back.has_value());
    CHECK(*back == b);
  }
  CHECK(bytes_to_units(" ") == "Ġ");
  CHECK(units_to_bytes("Ġwor") == std::string(" wor"));
  CHECK_FALSE(units_to_bytes("☃").has_value());
}

TEST_CASE("toy encode_pretoken follows the merge list in rank order") {
  // merges [(h,e), (l,l)] over single-byte vocab + "he", "ll"
  std::vector<std::string> vocab;
  for (char c = 'a'; c <= 'z'; ++c) vocab.emplace_back(1, c);
  vocab.push_back("he");
  vocab.push_back("ll");
  auto t = Tokenizer::from_parts(vocab, {{'h' - 'a', 'e' - 'a'}, {'l' - 'a', 'l' - 'a'}});
  auto he = *t.token_of_bytes("he");
  auto ll = *t.token_of_bytes("ll");
  CHECK(t.encode_pretoken("hello") == TokenSequence{he, ll, 'o' - 'a'});
  CHECK(t.encode_pretoken("x") == TokenSequence{'x' - 'a'});
  CHECK(t.encode_pretoken("") == TokenSequence{});
}

TEST_CASE("encode handles empty text and round trips") {
  const Tokenizer& t = fixture_tokenizer("cl100k_style");
  CHECK(t.encode("").empty());
  std::string s = "The quick brown fox, 1234 times.\n  日本語 test's";
  CHECK(t.decode(t.encode(s)) == s);
}

TEST_CASE("loader rejects unsupported documents") {
  CHECK_THROWS_AS(Tokenizer::from_json_text(R"({"model":{"type":"Unigram","vocab":[]}})"),
                  TokenizerError);
  CHECK_THROWS_AS(
      Tokenizer::from_json_text(
          R"({"model":{"type":"BPE","vocab":{"a":0},"merges":[]},"normalizer":{"type":"NFC"}})"),
      TokenizerError);
  CHECK_THROWS_AS(
      Tokenizer::from_json_text(
          R"({"model":{"type":"BPE","vocab":{"a":0},"merges":["a a"]},"pre_tokenizer":null})"),
      TokenizerError);  // merge result "aa" absent from vocab
  CHECK_THROWS_AS(
      Tokenizer::from_json_text(
          R"({"model":{"type":"BPE","vocab":{"a":0},"merges":[]},)"
          R"("pre_tokenizer":{"type":"Split","pattern":{"Regex":"[a-z]+"},"behavior":"Isolated"}})"),
      TokenizerError);  // regex outside the supported family
}

TEST_CASE("fixture tokenizers load with expected shapes") {
  const Tokenizer& g = fixture_tokenizer("gpt2_style");
  CHECK(g.vocab_size() == 1500);
  CHECK(g.rules().contractions);
  CHECK_FALSE(g.rules().contraction_fold_case);
  CHECK(g.eos_id().has_value());

  const Tokenizer& c = fixture_tokenizer("cl100k_style");
  CHECK(c.vocab_size() == 1500);
  CHECK(c.rules().contraction_fold_case);
  CHECK(c.rules().digits == DigitStyle::kGroupLeft);

  const Tokenizer& l = fixture_tokenizer("llama3_style");
  CHECK(l.ignore_merges());
  CHECK(l.added_patterns().size() == 3);
  CHECK(l.unreachable().size() >= 3);  // crafted unreachable entries
}

TEST_CASE("encode matches the reference implementation on golden cases") {
  auto doc = nlohmann::json::parse(read_file(data_path("golden/encode_cases.json")));
  for (const char* name : {"gpt2_style", "cl100k_style", "llama3_style"}) {
    const Tokenizer& t = fixture_tokenizer(name);
    size_t n = 0;
    for (const auto& c : doc.at(name)) {
      std::string text = c.at("text").get<std::string>();
      TokenSequence want;
      for (auto id : c.at("ids")) want.push_back(id.get<TokenId>());
      CAPTURE(name);
      CAPTURE(text);
      REQUIRE(t.encode(text) == want);
      REQUIRE(t.decode(want) == text);
      ++n;
    }
    CHECK(n > 300);
  }
}

TEST_CASE("encode matches the reference implementation on the corpus") {
  std::string corpus = read_file(data_path("corpus.txt"));
  for (const char* name : {"gpt2_style", "cl100k_style", "llama3_style"}) {
    const Tokenizer& t = fixture_tokenizer(name);
    auto want = read_ids(data_path(std::string("golden/corpus.") + name + ".ids"));
    TokenSequence got = t.encode(corpus);
    CAPTURE(name);
    REQUIRE(got.size() == want.size());
    for (size_t i = 0; i < got.size(); ++i) {
      if (static_cast<uint32_t>(got[i]) != want[i]) {
        CAPTURE(i);
        REQUIRE(static_cast<uint32_t>(got[i]) == want[i]);
      }
    }
    REQUIRE(t.decode(got) == corpus);
  }
}

TEST_CASE("ignore_merges emits whole-pretoken vocabulary hits") {
  const Tokenizer& l = fixture_tokenizer("llama3_style");
  auto qzk = l.token_of_bytes("qzk");
  REQUIRE(qzk.has_value());
  CHECK(l.unreachable().count(*qzk) == 1);
  CHECK(l.encode("qzk") == TokenSequence{*qzk});
  // As part of a longer word the unreachable token cannot appear.
  for (TokenId id : l.encode("qzkq")) CHECK(id != *qzk);
}

TEST_CASE("normalization drops duplicate forming merges") {
  // [(a,b)->ab, (ab,c)->abc, (b,c)->bc, (a,bc)->abc(dup)]
  std::vector<std::string> vocab = {"a", "b", "c", "ab", "abc", "bc"};
  auto t = Tokenizer::from_parts(vocab, {{0, 1}, {3, 2}, {1, 2}, {0, 5}});
  // "abc" forms via (ab, c); the later (a, bc) merge is unreachable.
  CHECK(t.merges().size() == 3);
  CHECK(t.encode_pretoken("abc") == TokenSequence{*t.token_of_bytes("abc")});
  CHECK(t.unreachable().empty());
  auto f = t.forming_merge(*t.token_of_bytes("abc"));
  REQUIRE(f.has_value());
  CHECK(t.merges()[*f].left == *t.token_of_bytes("ab"));
}

TEST_CASE("normalization relocates out-of-order merges") {
  // (ab,c)->abc listed before (a,b)->ab.
  std::vector<std::string> vocab = {"a", "b", "c", "ab", "abc"};
  auto t = Tokenizer::from_parts(vocab, {{3, 2}, {0, 1}});
  REQUIRE(t.merges().size() == 2);
  CHECK(t.merges()[0].result == *t.token_of_bytes("ab"));
  CHECK(t.merges()[1].result == *t.token_of_bytes("abc"));
  CHECK(t.encode_pretoken("abc") == TokenSequence{*t.token_of_bytes("abc")});
}

TEST_CASE("normalization marks unformable tokens unreachable") {
  // "ac" exists in the vocabulary but no merge forms it.
  std::vector<std::string> vocab = {"a", "b", "c", "ab", "ac"};
  auto t = Tokenizer::from_parts(vocab, {{0, 1}});
  CHECK(t.unreachable().count(*t.token_of_bytes("ac")) == 1);
  CHECK_FALSE(t.is_standalone(*t.token_of_bytes("ac")));
  CHECK(t.is_standalone(*t.token_of_bytes("ab")));
}

TEST_CASE("already-normal merge lists are a fixed point") {
  std::vector<std::string> vocab = {"a", "b", "c", "ab", "abc"};
  auto t = Tokenizer::from_parts(vocab, {{0, 1}, {3, 2}});
  REQUIRE(t.merges().size() == 2);
  CHECK(t.merges()[0].left == 0);
  CHECK(t.merges()[0].right == 1);
  CHECK(t.merges()[1].left == 3);
  CHECK(t.merges()[1].right == 2);
  CHECK(t.unreachable().empty());
}

TEST_CASE("round trip and canonical idempotence on random byte strings") {
  const Tokenizer& t = fixture_tokenizer("gpt2_style");
  std::mt19937 rng(123);
  for (int it = 0; it < 2000; ++it) {
    size_t len = rng() % 24;
    std::string s;
    for (size_t i = 0; i < len; ++i) s.push_back(static_cast<char>(rng() % 256));
    CAPTURE(s);
    TokenSequence e1 = t.encode(s);
    REQUIRE(t.decode(e1) == s);
    TokenSequence e2 = t.encode(t.decode(e1));
    REQUIRE(e1 == e2);
    REQUIRE(t.encode(s) == e1);  // determinism
  }
}

TEST_CASE("decode rejects unknown ids") {
  const Tokenizer& t = fixture_tokenizer("gpt2_style");
  CHECK_THROWS_AS(t.decode({static_cast<TokenId>(t.vocab_size() + 7)}), TokenizerError);
  CHECK(t.decode({}) == "");
}
