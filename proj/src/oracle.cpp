#include "bytelm/oracle.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace bytelm::oracle {

TokenSequence heap_encode_pretoken(std::string_view bytes, const Tokenizer& tok) {
  if (bytes.empty()) return {};
  if (tok.ignore_merges()) {
    auto hit = tok.token_of_bytes(bytes);
    if (hit && !tok.is_special(*hit)) return {*hit};
  }
  TokenSequence seq;
  for (char c : bytes) {
    auto id = tok.token_of_bytes(std::string_view(&c, 1));
    if (!id) throw TokenizerError("oracle: byte not in vocabulary alphabet");
    seq.push_back(*id);
  }
  const auto& raw = tok.raw_merges();
  // Earliest raw position per pair, rebuilt by scanning (kept simple on
  // purpose; this is the reference, not the fast path).
  for (;;) {
    size_t best_rank = raw.size();
    size_t best_pos = 0;
    for (size_t i = 0; i + 1 < seq.size(); ++i) {
      for (size_t r = 0; r < best_rank; ++r) {
        if (raw[r].first == seq[i] && raw[r].second == seq[i + 1]) {
          best_rank = r;
          best_pos = i;
          break;
        }
      }
    }
    if (best_rank == raw.size()) break;
    const std::string joined =
        tok.token_bytes(seq[best_pos]) + tok.token_bytes(seq[best_pos + 1]);
    auto result = tok.token_of_bytes(joined);
    if (!result) throw TokenizerError("oracle: merge result missing from vocabulary");
    seq[best_pos] = *result;
    seq.erase(seq.begin() + static_cast<std::ptrdiff_t>(best_pos) + 1);
  }
  return seq;
}

TokenSequence heap_encode(std::string_view text, const Tokenizer& tok) {
  TokenSequence out;
  auto spans = match_added_tokens(tok.added_patterns(), text);
  size_t pos = 0;
  auto run_segment = [&](std::string_view seg) {
    for (std::string_view pt : pretokenize(tok.rules(), seg)) {
      TokenSequence toks = heap_encode_pretoken(pt, tok);
      out.insert(out.end(), toks.begin(), toks.end());
    }
  };
  for (const AddedSpan& s : spans) {
    if (s.start > pos) run_segment(text.substr(pos, s.start - pos));
    out.push_back(tok.added_pattern_id(s.pattern));
    pos = s.end;
  }
  if (pos < text.size()) run_segment(text.substr(pos));
  return out;
}

namespace {

// Shared depth-first walk over token sequences whose decodings stay within
// (and finally cover) the prompt. Calls `on_cover(path)` for every minimal
// covering candidate; extension stops there.
template <typename F>
void walk_coverings(std::string_view prompt, const Tokenizer& tok, TokenSequence& path,
                    size_t covered, const F& on_cover) {
  for (TokenId id = 0; static_cast<size_t>(id) < tok.vocab_size(); ++id) {
    if (tok.is_special(id)) continue;
    const std::string& tb = tok.token_bytes(id);
    if (tb.empty()) continue;
    const size_t remaining = prompt.size() - covered;
    const size_t overlap = std::min(tb.size(), remaining);
    if (prompt.compare(covered, overlap, tb, 0, overlap) != 0) continue;
    path.push_back(id);
    if (tb.size() >= remaining) {
      on_cover(path);
    } else {
      walk_coverings(prompt, tok, path, covered + tb.size(), on_cover);
    }
    path.pop_back();
  }
}

}  // namespace

std::set<TokenSequence> enumerate_valid_coverings(std::string_view prompt, const Tokenizer& tok) {
  std::set<TokenSequence> out;
  if (prompt.empty()) {
    for (TokenId id = 0; static_cast<size_t>(id) < tok.vocab_size(); ++id) {
      if (tok.is_special(id) || tok.token_bytes(id).empty()) continue;
      TokenSequence single{id};
      if (tok.encode(tok.decode(single)) == single) out.insert(std::move(single));
    }
    return out;
  }
  TokenSequence path;
  walk_coverings(prompt, tok, path, 0, [&](const TokenSequence& p) {
    if (tok.encode(tok.decode(p)) == p) out.insert(p);
  });
  return out;
}

double brute_prefix_prob(const LanguageModel& lm, std::string_view prompt, const Tokenizer& tok) {
  if (prompt.empty()) return 1.0;  // the empty prefix event is certain
  double mass = 0.0;
  TokenSequence path;

  // Depth-first sum of chain probabilities over minimal valid coverings.
  // Intermediate paths are unconstrained: validity is only required of the
  // covering itself.
  struct Walker {
    const LanguageModel& lm;
    const Tokenizer& tok;
    std::string_view prompt;
    double* mass;

    void go(TokenSequence& path, size_t covered, double logp) {
      TokenDistribution d = lm.next_logprobs(path);
      for (TokenId id = 0; static_cast<size_t>(id) < tok.vocab_size(); ++id) {
        if (tok.is_special(id)) continue;
        const std::string& tb = tok.token_bytes(id);
        if (tb.empty()) continue;
        if (static_cast<size_t>(id) >= d.vocab_size()) break;
        double step = d.logprobs[id];
        if (!std::isfinite(step)) continue;
        const size_t remaining = prompt.size() - covered;
        const size_t overlap = std::min(tb.size(), remaining);
        if (prompt.compare(covered, overlap, tb, 0, overlap) != 0) continue;
        path.push_back(id);
        if (tb.size() >= remaining) {
          if (tok.encode(tok.decode(path)) == path) *mass += std::exp(logp + step);
        } else {
          go(path, covered + tb.size(), logp + step);
        }
        path.pop_back();
      }
    }
  };
  Walker w{lm, tok, prompt, &mass};
  w.go(path, 0, 0.0);
  return mass;
}

Tokenizer random_toy_tokenizer(const ToyTokenizerSpec& spec) {
  if (spec.alphabet == 0 || spec.alphabet > 8) {
    throw std::invalid_argument("toy tokenizer alphabet must be 1..8");
  }
  if (spec.merge_count > 40) {
    throw std::invalid_argument("toy tokenizer merge count must be <= 40");
  }
  std::mt19937_64 rng(spec.seed);
  std::vector<std::string> vocab;
  std::set<std::string> seen;
  for (uint32_t i = 0; i < spec.alphabet; ++i) {
    vocab.emplace_back(1, static_cast<char>('a' + i));
    seen.insert(vocab.back());
  }
  std::vector<std::pair<TokenId, TokenId>> merges;
  uint32_t attempts = 0;
  while (merges.size() < spec.merge_count && attempts < spec.merge_count * 40) {
    ++attempts;
    TokenId l = static_cast<TokenId>(rng() % vocab.size());
    TokenId r = static_cast<TokenId>(rng() % vocab.size());
    std::string joined = vocab[l] + vocab[r];
    if (joined.size() > 12 || seen.count(joined)) continue;
    // Skip shadowed candidates: earlier merges may already rewrite the
    // joined bytes so that (l, r) never becomes adjacent.
    vocab.push_back(joined);
    merges.emplace_back(l, r);
    Tokenizer probe = Tokenizer::from_parts(vocab, merges, RuleSet::none(), false);
    if (!probe.unreachable().empty()) {
      vocab.pop_back();
      merges.pop_back();
      continue;
    }
    seen.insert(joined);
  }
  return Tokenizer::from_parts(std::move(vocab), std::move(merges), spec.rules,
                               spec.ignore_merges);
}

}  // namespace bytelm::oracle
