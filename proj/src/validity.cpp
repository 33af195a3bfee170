#include "bytelm/validity.hpp"

#include <algorithm>
#include <limits>

namespace bytelm {

namespace {
constexpr uint32_t kNoRank = std::numeric_limits<uint32_t>::max();
}

ValidityCache::ValidityCache(const Tokenizer& tok)
    : tok_(tok), standalone_(tok.vocab_size()) {
  const size_t n = tok.vocab_size();
  left_.resize(n);
  right_.resize(n);
  // Tokens ordered by byte length have their spines' suffixes available.
  std::vector<TokenId> order;
  order.reserve(n);
  for (TokenId id = 0; static_cast<size_t>(id) < n; ++id) order.push_back(id);
  std::sort(order.begin(), order.end(), [&](TokenId a, TokenId b) {
    return tok.token_bytes(a).size() < tok.token_bytes(b).size();
  });
  for (TokenId id : order) {
    auto f = tok.forming_merge(id);
    if (!f) {
      left_[id].tokens = {id};
      right_[id].tokens = {id};
      continue;
    }
    const MergeRule& m = tok.merges()[*f];
    left_[id] = left_[m.left];
    left_[id].tokens.push_back(id);
    left_[id].step_rank.push_back(m.rank);
    right_[id] = right_[m.right];
    right_[id].tokens.push_back(id);
    right_[id].step_rank.push_back(m.rank);
  }
  for (TokenId id = 0; static_cast<size_t>(id) < n; ++id) {
    if (tok.is_standalone(id)) standalone_.set(id);
  }
}

bool ValidityCache::bpe_pair_valid(TokenId a, TokenId b) const {
  if (tok_.is_special(a) || tok_.is_special(b)) return false;
  if (!tok_.is_byte_reachable(a) || !tok_.is_byte_reachable(b)) return false;
  const Spine& ra = right_spine(a);
  const Spine& lb = left_spine(b);
  size_t i = 0, j = 0, steps = 0;
  for (;;) {
    ++steps;
    uint32_t next_a = i < ra.step_rank.size() ? ra.step_rank[i] : kNoRank;
    uint32_t next_b = j < lb.step_rank.size() ? lb.step_rank[j] : kNoRank;
    auto cross = tok_.merge_rank(ra.tokens[i], lb.tokens[j]);
    // A rank tie with the right spine means the cross occurrence of the same
    // rule sits further left and wins; a tie with the left spine means the
    // in-token occurrence wins.
    if (cross && *cross < next_a && *cross <= next_b) {
      last_steps_ = steps;
      return false;
    }
    if (next_a == kNoRank && next_b == kNoRank) break;
    if (next_a < next_b) {
      ++i;
    } else {
      ++j;
    }
  }
  last_steps_ = steps;
  return true;
}

bool ValidityCache::is_pair_valid(TokenId a, TokenId b) const {
  if (tok_.is_special(b)) return false;
  if (tok_.is_special(a)) return standalone_.test(b);  // trees restart after specials
  const std::string& ba = tok_.token_bytes(a);
  const std::string& bb = tok_.token_bytes(b);
  std::string joined = ba + bb;
  // Added-token matches rewrite the segmentation wholesale; defer to the
  // full encoder on any hit (rare and short).
  if (!tok_.added_patterns().empty() &&
      !match_added_tokens(tok_.added_patterns(), joined).empty()) {
    TokenSequence enc = tok_.encode(joined);
    return enc.size() == 2 && enc[0] == a && enc[1] == b;
  }
  auto bounds = pretoken_boundaries(tok_.rules(), joined);
  if (bounds.empty()) {
    if (tok_.ignore_merges() && tok_.token_of_bytes(joined)) return false;
    return bpe_pair_valid(a, b);
  }
  if (bounds.size() == 1 && bounds[0] == ba.size()) {
    // The junction is a pretoken boundary: each side must encode alone.
    return tok_.is_standalone(a) && tok_.is_standalone(b);
  }
  // Some split falls strictly inside one of the tokens, so the layouts can
  // only agree in corner cases; the definitional encoder settles those.
  TokenSequence enc = tok_.encode(joined);
  return enc.size() == 2 && enc[0] == a && enc[1] == b;
}

const Bitset& ValidityCache::valid_successors(TokenId a) const {
  {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = succ_rows_.find(a);
    if (it != succ_rows_.end()) return it->second;
  }
  Bitset row(tok_.vocab_size());
  for (TokenId b = 0; static_cast<size_t>(b) < tok_.vocab_size(); ++b) {
    if (tok_.is_special(b) || tok_.token_bytes(b).empty()) continue;
    if (is_pair_valid(a, b)) row.set(b);
  }
  std::lock_guard<std::mutex> lock(mu_);
  return succ_rows_.emplace(a, std::move(row)).first->second;
}

const Bitset& ValidityCache::bpe_successors(TokenId a) const {
  {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = bpe_rows_.find(a);
    if (it != bpe_rows_.end()) return it->second;
  }
  Bitset row(tok_.vocab_size());
  for (TokenId b = 0; static_cast<size_t>(b) < tok_.vocab_size(); ++b) {
    if (tok_.is_special(b) || tok_.token_bytes(b).empty()) continue;
    if (bpe_pair_valid(a, b)) row.set(b);
  }
  std::lock_guard<std::mutex> lock(mu_);
  return bpe_rows_.emplace(a, std::move(row)).first->second;
}

Bitset ValidityCache::tokens_with_prefix(std::string_view p) const {
  if (p.empty()) {
    Bitset all(tok_.vocab_size());
    for (TokenId id : tok_.sorted_tokens()) all.set(id);
    return all;
  }
  const std::string key(p.substr(0, 4));
  Bitset base(tok_.vocab_size());
  bool have = false;
  {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = prefix_rows_.find(key);
    if (it != prefix_rows_.end()) {
      base = it->second;
      have = true;
    }
  }
  if (!have) {
    const auto& sorted = tok_.sorted_tokens();
    auto lo = std::lower_bound(sorted.begin(), sorted.end(), key,
                               [&](TokenId id, const std::string& k) {
                                 return tok_.token_bytes(id) < k;
                               });
    for (auto it = lo; it != sorted.end(); ++it) {
      const std::string& tb = tok_.token_bytes(*it);
      if (tb.size() < key.size() || tb.compare(0, key.size(), key) != 0) break;
      base.set(*it);
    }
    std::lock_guard<std::mutex> lock(mu_);
    prefix_rows_.emplace(key, base);
  }
  if (p.size() <= 4) return base;
  Bitset out(tok_.vocab_size());
  base.for_each_set([&](size_t id) {
    const std::string& tb = tok_.token_bytes(static_cast<TokenId>(id));
    if (tb.size() >= p.size() && std::string_view(tb).substr(0, p.size()) == p) {
      out.set(id);
    }
  });
  return out;
}

bool ValidityCache::is_sequence_valid(const TokenSequence& seq) const {
  if (seq.empty()) return true;
  for (TokenId t : seq) {
    if (t < 0 || static_cast<size_t>(t) >= tok_.vocab_size()) return false;
    if (tok_.is_special(t)) return false;
  }
  const bool pure_bpe = !tok_.rules().split && tok_.added_patterns().empty();
  if (!pure_bpe) {
    // Pretokenization makes validity future-dependent within the sequence;
    // only the definitional test is exact there (validity is not
    // prefix-closed, so no pairwise shortcut applies).
    return tok_.encode(tok_.decode(seq)) == seq;
  }
  if (seq.size() == 1) return tok_.is_standalone(seq[0]);
  for (TokenId t : seq) {
    if (!tok_.is_byte_reachable(t)) return false;
  }
  for (size_t i = 0; i + 1 < seq.size(); ++i) {
    if (!bpe_pair_valid(seq[i], seq[i + 1])) return false;
  }
  if (tok_.ignore_merges() && tok_.token_of_bytes(tok_.decode(seq))) return false;
  return true;
}

}  // namespace bytelm
