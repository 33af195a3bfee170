#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "bytelm/pretokenizer.hpp"

namespace bytelm {

using TokenId = int32_t;
using TokenSequence = std::vector<TokenId>;

struct MergeRule {
  TokenId left = -1;
  TokenId right = -1;
  TokenId result = -1;
  uint32_t rank = 0;
};

class TokenizerError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A loaded byte-level BPE tokenizer: vocabulary, normalized merge list,
// pretokenizer rules, and the special/added token registry. Immutable after
// construction; safe for concurrent reads.
class Tokenizer {
 public:
  // -- construction ---------------------------------------------------------
  static Tokenizer load(const std::string& path);
  static Tokenizer from_json_text(std::string_view json_text);

  // Builds a tokenizer directly from byte strings (used for toy tokenizers).
  // `merges` are (left, right) vocab indices in list order; result strings
  // must be present in `vocab`.
  static Tokenizer from_parts(std::vector<std::string> vocab,
                              std::vector<std::pair<TokenId, TokenId>> merges,
                              RuleSet rules = RuleSet::none(), bool ignore_merges = false);

  // -- vocabulary -----------------------------------------------------------
  size_t vocab_size() const { return vocab_.size(); }
  const std::string& token_bytes(TokenId id) const;
  std::optional<TokenId> token_of_bytes(std::string_view bytes) const;
  bool is_special(TokenId id) const { return specials_.count(id) > 0; }
  bool is_added(TokenId id) const { return added_ids_.count(id) > 0; }
  bool is_byte_reachable(TokenId id) const { return !unreachable_.count(id) && !is_special(id); }
  const std::unordered_set<TokenId>& unreachable() const { return unreachable_; }
  const std::vector<TokenId>& special_ids() const { return special_list_; }
  std::optional<TokenId> special_of_string(std::string_view content) const;
  std::optional<TokenId> bos_id() const { return bos_; }
  std::optional<TokenId> eos_id() const { return eos_; }

  // -- merges ---------------------------------------------------------------
  const std::vector<MergeRule>& merges() const { return merges_; }
  const std::vector<std::pair<TokenId, TokenId>>& raw_merges() const { return raw_merges_; }
  std::optional<uint32_t> merge_rank(TokenId left, TokenId right) const;
  std::optional<TokenId> merge_result(TokenId left, TokenId right) const;
  // Forming merge of a token (index into merges()), if any.
  std::optional<uint32_t> forming_merge(TokenId id) const;
  bool ignore_merges() const { return ignore_merges_; }
  uint32_t max_merge_depth() const { return max_depth_; }

  // -- pretokenization ------------------------------------------------------
  const RuleSet& rules() const { return rules_; }
  const std::vector<std::string>& added_patterns() const { return added_patterns_; }
  TokenId added_pattern_id(int pattern) const { return added_pattern_ids_.at(pattern); }

  // -- encoding / decoding --------------------------------------------------
  // BPE over a single pretoken (no pretokenization, no added tokens).
  TokenSequence encode_pretoken(std::string_view bytes) const;
  // Full pipeline: added-token split, pretokenize, per-pretoken BPE.
  TokenSequence encode(std::string_view text) const;
  std::string decode(const TokenSequence& seq) const;

  // True iff encode of the token's own bytes yields exactly this token
  // (including the ignore_merges vocabulary hit).
  bool is_standalone(TokenId id) const;

  // Longest token byte length in the vocabulary.
  size_t max_token_len() const { return max_token_len_; }

  // Tokens sorted by byte string; used for prefix range queries.
  const std::vector<TokenId>& sorted_tokens() const { return sorted_tokens_; }

 private:
  void finalize();
  void normalize_merges(const std::vector<std::pair<TokenId, TokenId>>& raw);

  std::vector<std::string> vocab_;
  std::unordered_map<std::string, TokenId> vocab_index_;
  std::vector<std::pair<TokenId, TokenId>> raw_merges_;
  std::vector<MergeRule> merges_;
  std::unordered_map<uint64_t, uint32_t> pair_rank_;   // (left,right) -> merge index
  std::vector<std::optional<uint32_t>> forming_;       // token -> merge index
  std::unordered_set<TokenId> unreachable_;
  std::unordered_set<TokenId> specials_;
  std::vector<TokenId> special_list_;
  std::unordered_set<TokenId> added_ids_;
  std::vector<std::string> added_patterns_;
  std::vector<TokenId> added_pattern_ids_;
  std::optional<TokenId> bos_;
  std::optional<TokenId> eos_;
  RuleSet rules_;
  bool ignore_merges_ = false;
  uint32_t max_depth_ = 0;
  size_t max_token_len_ = 0;
  std::vector<TokenId> sorted_tokens_;
  std::vector<bool> standalone_;
};

// The ByteLevel printable-unicode remapping used by tokenizer definition
// files: every byte maps to a distinct unicode scalar.
uint32_t byte_to_unit(uint8_t b);
std::optional<uint8_t> unit_to_byte(uint32_t cp);
std::string bytes_to_units(std::string_view bytes);
// Returns nullopt when the string contains scalars outside the unit alphabet.
std::optional<std::string> units_to_bytes(std::string_view units);

}  // namespace bytelm
