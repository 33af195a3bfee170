#pragma once

#include <set>
#include <string_view>

#include "bytelm/lm.hpp"
#include "bytelm/pretokenizer.hpp"
#include "bytelm/tokenizer.hpp"

// Brute-force reference implementations used as ground truth by the
// differential suites. Deliberately independent of the fast paths: no
// validity caches, no trajectory shortcut, no priority heap.
namespace bytelm::oracle {

// Repeatedly applies the lowest-raw-rank merge available anywhere in the
// sequence (ties leftmost) until none applies: the reference semantics for
// out-of-order merge lists. Operates on a single pretoken.
TokenSequence heap_encode_pretoken(std::string_view bytes, const Tokenizer& tok);

// Full-pipeline reference: added-token split, pretokenize, then
// heap_encode_pretoken per piece, all against the raw merge list.
TokenSequence heap_encode(std::string_view text, const Tokenizer& tok);

// All token sequences satisfying the covering conditions: the prompt is a
// prefix of the decoding, only the final token may straddle the prompt end,
// and the sequence survives the definitional encode(decode(T)) == T test.
std::set<TokenSequence> enumerate_valid_coverings(std::string_view prompt, const Tokenizer& tok);

// Exhaustive prefix probability: sum over all valid minimal coverings of
// the chain probability of the path (no end-of-sequence term). Requires a
// finite-horizon model and a short prompt.
double brute_prefix_prob(const LanguageModel& lm, std::string_view prompt, const Tokenizer& tok);

struct ToyTokenizerSpec {
  uint64_t seed = 0;
  uint32_t alphabet = 4;      // single-byte tokens 'a', 'b', ...; at most 8
  uint32_t merge_count = 12;  // at most 40
  RuleSet rules = RuleSet::none();
  bool ignore_merges = false;
};

// Deterministic per seed; merges always reference previously formed tokens.
Tokenizer random_toy_tokenizer(const ToyTokenizerSpec& spec);

}  // namespace bytelm::oracle
