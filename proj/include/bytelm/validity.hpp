#pragma once

#include <mutex>
#include <unordered_map>

#include "bytelm/bitset.hpp"
#include "bytelm/tokenizer.hpp"

namespace bytelm {

// Pairwise token validity and the token-mask caches that make covering-tree
// expansion cheap. All queries are safe for concurrent readers; lazy cache
// population is internally synchronized.
class ValidityCache {
 public:
  explicit ValidityCache(const Tokenizer& tok);

  const Tokenizer& tokenizer() const { return tok_; }

  // Definitional pair validity: encode(decode([a,b])) == [a,b], evaluated
  // without re-running full BPE: the boundary merge trajectories decide the
  // in-pretoken case, and a short pretokenization of the joined bytes
  // handles split placement. Special tokens restart the text, so a special
  // left side accepts exactly the standalone tokens.
  bool is_pair_valid(TokenId a, TokenId b) const;

  // Pure-BPE boundary check: would any merge cross the byte boundary between
  // a and b if both lay inside one pretoken? Ignores pretokenization; the
  // covering-tree engine composes it with live split hypotheses.
  bool bpe_pair_valid(TokenId a, TokenId b) const;

  // Row caches (memoized bitmasks over the vocabulary).
  const Bitset& valid_successors(TokenId a) const;
  const Bitset& bpe_successors(TokenId a) const;

  // Tokens whose byte string begins with `p` (specials excluded). Masks for
  // prefixes up to 4 bytes are cached; longer prefixes refine the cached
  // 4-byte mask.
  Bitset tokens_with_prefix(std::string_view p) const;

  // Tokens t with encode(bytes(t)) == [t]; the legal starts of a fresh
  // pretoken (includes unreachable vocabulary entries under ignore_merges).
  const Bitset& standalone_mask() const { return standalone_; }

  // encode(decode(seq)) == seq. Uses the pairwise reduction for pure-BPE
  // tokenizers and the definitional test when pretokenization or added
  // tokens can rewrite boundaries (validity is not prefix-closed there).
  bool is_sequence_valid(const TokenSequence& seq) const;

  // Trajectory length bound: is_pair_valid touches at most
  // 2 * (max merge depth) + 1 spine entries.
  size_t last_pair_steps() const { return last_steps_; }

 private:
  struct Spine {
    // Edge tokens from the base unit up to the token itself; step[i] is the
    // rank that advances entry i to entry i+1 (the forming merge of the
    // larger token).
    std::vector<TokenId> tokens;
    std::vector<uint32_t> step_rank;
  };
  const Spine& right_spine(TokenId t) const { return right_[t]; }
  const Spine& left_spine(TokenId t) const { return left_[t]; }

  const Tokenizer& tok_;
  std::vector<Spine> left_, right_;
  Bitset standalone_;
  mutable std::mutex mu_;
  mutable std::unordered_map<TokenId, Bitset> succ_rows_;
  mutable std::unordered_map<TokenId, Bitset> bpe_rows_;
  mutable std::unordered_map<std::string, Bitset> prefix_rows_;
  mutable size_t last_steps_ = 0;
};

}  // namespace bytelm
