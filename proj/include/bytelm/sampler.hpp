#pragma once

#include <optional>
#include <random>

#include "bytelm/lm.hpp"
#include "bytelm/vct.hpp"

namespace bytelm {

// Byte-level events: 256 byte values, end-of-text, and (when enabled)
// special-token generation options at an exact prompt boundary.
struct ByteDistribution {
  static constexpr size_t kEot = 256;
  // log masses of the 257 base events (unnormalized covering mass)
  std::vector<double> log_mass = std::vector<double>(257, -std::numeric_limits<double>::infinity());
  // eligible special tokens with their log masses
  std::vector<std::pair<TokenId, double>> specials;
  // total covering mass of the consumed prefix: the exact normalizer, so
  // that normalized values are prefix-probability ratios
  double log_total = -std::numeric_limits<double>::infinity();

  double total_log_mass() const { return log_total; }
  // Log probabilities over the 257 base events (+ specials), normalized by
  // the prefix mass. Sums to one up to the mass the model places on invalid
  // token continuations.
  std::vector<double> normalized() const;
};

enum class TransformLevel : uint8_t { kByte, kToken };

struct SamplerConfig {
  double temperature = 1.0;  // 0 selects the arg-max (greedy) limit
  std::optional<size_t> top_k;
  std::optional<double> top_p;
  TransformLevel transform_level = TransformLevel::kByte;
  uint64_t seed = 0;
  bool specials_as_events = false;  // expose boundary special tokens
  size_t max_tokens = 256;          // budget for completion sampling

  void validate() const;
};

// Applies temperature / top-k / top-p to a vector of log masses (any
// granularity) and renormalizes. Temperature divides, top-k keeps the k
// largest, top-p keeps the smallest prefix of the sorted masses reaching p.
std::vector<double> apply_transform(const SamplerConfig& cfg, std::vector<double> log_mass);

// One model bound to its tokenizer and covering tree.
class ByteSampler {
 public:
  ByteSampler(const LanguageModel& lm, const Tokenizer& tok, ValidityCache& validity);

  // log P(prompt is a byte prefix of the decoded generation).
  double prefix_logprob(std::string_view prompt);

  // Streams `prompt` into the tree (usable incrementally).
  void feed_prompt(std::string_view prompt);
  void feed_special(TokenId special);

  // Distribution over the next byte / end-of-text (+ boundary specials)
  // given everything consumed so far.
  ByteDistribution next_byte_distribution();

  // Samples a covering of the consumed prompt proportional to leaf mass,
  // commits it, then continues with ordinary token-level ancestral sampling
  // under the config. Returns the full token sequence (trunk included).
  TokenSequence sample_completion(const SamplerConfig& cfg, std::mt19937_64& rng);

  // Byte-level ancestral sampling: up to n bytes, stopping at end-of-text.
  std::string sample_bytes(size_t n, const SamplerConfig& cfg, std::mt19937_64& rng);

  // Draws one event from the current next-byte distribution under the
  // config and advances the tree. Returns the byte, kEot, or a special id
  // encoded as 257 + index into the distribution's specials.
  size_t sample_event(const SamplerConfig& cfg, std::mt19937_64& rng);

  const Vct& vct() const { return vct_; }
  Vct& vct() { return vct_; }
  size_t inference_calls() const { return inference_calls_; }

 private:
  const TokenDistribution& node_dist(const Vct::Node* node);
  double path_logprob(const Vct::Node* node);
  // Masses of covering leaves, grouped per node, with the configured
  // token-level transform applied to each node's distribution first.
  struct LeafMasses {
    std::vector<Vct::LeafGroup> groups;
    std::vector<std::vector<std::pair<TokenId, double>>> masses;  // per group
    double trunk_exact_logprob = -std::numeric_limits<double>::infinity();
    bool has_trunk_exact = false;
  };
  LeafMasses leaf_masses(const SamplerConfig* token_transform);

  const LanguageModel& lm_;
  const Tokenizer& tok_;
  ValidityCache& validity_;
  Vct vct_;
  size_t inference_calls_ = 0;
  // keyed by packed context token ids: (chain logprob, distribution there)
  std::unordered_map<std::string, std::pair<double, std::shared_ptr<TokenDistribution>>> cache_;
};

// Cross-tokenizer composition over byte events.
struct CompositeMember {
  ByteSampler* sampler;
  double weight = 1.0;
};

// Probability-space weighted average of the members' normalized byte
// distributions. Weights must be positive; they are normalized to sum 1.
ByteDistribution ensemble_next_byte(std::vector<CompositeMember> members);

// Proxy arithmetic: event-wise log p_base + log p_expert - log p_anti over
// normalized byte distributions, renormalized.
ByteDistribution proxy_next_byte(ByteSampler& base, ByteSampler& expert, ByteSampler& anti);

// Advances every member on the sampled byte (or end-of-text: no-op).
void composite_feed_byte(std::vector<ByteSampler*> members, uint8_t byte);

}  // namespace bytelm
