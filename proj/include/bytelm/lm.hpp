#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "bytelm/tokenizer.hpp"

namespace bytelm {

// Normalized next-token distribution: logprobs over vocabulary plus
// end-of-sequence at index vocab_size.
struct TokenDistribution {
  std::vector<double> logprobs;

  size_t vocab_size() const { return logprobs.size() - 1; }
  double eos() const { return logprobs.back(); }
};

// Deterministic next-token-distribution contract. Contexts are token
// sequences after the implicit beginning-of-sequence anchor; the empty
// context queries the distribution at sequence start.
class LanguageModel {
 public:
  virtual ~LanguageModel() = default;
  virtual size_t vocab_size() const = 0;
  virtual TokenDistribution next_logprobs(std::span<const TokenId> ctx) const = 0;
};

// Chain-rule log probability of a sequence; adds the end-of-sequence term
// iff `terminated`.
double seq_logprob(const LanguageModel& lm, std::span<const TokenId> seq, bool terminated);

double log_sum_exp(std::span<const double> v);

class UniformLM : public LanguageModel {
 public:
  explicit UniformLM(size_t vocab_size) : n_(vocab_size) {}
  size_t vocab_size() const override { return n_; }
  TokenDistribution next_logprobs(std::span<const TokenId> ctx) const override;

 private:
  size_t n_;
};

// Explicit conditional table with a back-off default distribution and a
// hard horizon: every context of length >= horizon ends the sequence with
// probability one, so total path mass is finitely enumerable.
class TabularLM : public LanguageModel {
 public:
  TabularLM(size_t vocab_size, uint32_t horizon, std::vector<double> default_logprobs);

  void set_entry(TokenSequence ctx, std::vector<double> logprobs);

  size_t vocab_size() const override { return n_; }
  uint32_t horizon() const { return horizon_; }
  TokenDistribution next_logprobs(std::span<const TokenId> ctx) const override;

  // Deterministic random instance: `entries` explicit contexts drawn from
  // short random sequences, probabilities from a seeded generator.
  static TabularLM random(uint64_t seed, size_t vocab_size, uint32_t horizon, size_t entries);

  // JSON document format: {"vocab_size": N, "horizon": H,
  //   "default": [p...], "table": {"1 2 3": [p...]}} with probabilities
  // (not logs) of length N+1; rows are normalized on load.
  static TabularLM load_json(const std::string& path);

 private:
  static std::vector<double> normalize_probs(const std::vector<double>& probs);
  size_t n_;
  uint32_t horizon_;
  std::vector<double> default_;
  std::unordered_map<std::string, std::vector<double>> table_;
};

// Replays distributions captured from a real model. Missing contexts are an
// error; keys store the full token sequence, so lookups cannot collide.
//
// File format (little-endian): magic "BLMR", version byte 0x01, u32 vocab
// size, u32 record count, then per record: u32 context length, u32 ids[],
// f32 logprobs[vocab+1].
class ReplayLM : public LanguageModel {
 public:
  static ReplayLM load(const std::string& path);
  static void write(const std::string& path, size_t vocab_size,
                    const std::vector<std::pair<TokenSequence, std::vector<float>>>& records);

  size_t vocab_size() const override { return n_; }
  TokenDistribution next_logprobs(std::span<const TokenId> ctx) const override;

 private:
  size_t n_ = 0;
  std::unordered_map<std::string, std::vector<float>> records_;
};

}  // namespace bytelm
