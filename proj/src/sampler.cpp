#include "bytelm/sampler.hpp"

#include <algorithm>
#include <cmath>

namespace bytelm {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double lse2(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

std::string seq_key(std::span<const TokenId> seq) {
  std::string key;
  key.reserve(seq.size() * sizeof(TokenId));
  for (TokenId t : seq) key.append(reinterpret_cast<const char*>(&t), sizeof(TokenId));
  return key;
}

}  // namespace

std::vector<double> ByteDistribution::normalized() const {
  double z = log_total;
  std::vector<double> out = log_mass;
  for (double& x : out) x -= z;
  for (const auto& [id, lp] : specials) out.push_back(lp - z);
  return out;
}

void SamplerConfig::validate() const {
  if (temperature < 0) throw std::invalid_argument("temperature must be >= 0");
  if (top_k && *top_k == 0) throw std::invalid_argument("top_k must keep at least one event");
  if (top_p && (*top_p <= 0 || *top_p > 1)) throw std::invalid_argument("top_p must be in (0,1]");
}

std::vector<double> apply_transform(const SamplerConfig& cfg, std::vector<double> log_mass) {
  cfg.validate();
  double z = log_sum_exp(log_mass);
  for (double& x : log_mass) x -= z;
  if (cfg.temperature == 0.0) {
    // arg-max limit
    size_t best = 0;
    for (size_t i = 1; i < log_mass.size(); ++i) {
      if (log_mass[i] > log_mass[best]) best = i;
    }
    std::vector<double> out(log_mass.size(), kNegInf);
    out[best] = 0.0;
    return out;
  }
  if (cfg.temperature != 1.0) {
    for (double& x : log_mass) x /= cfg.temperature;
  }
  std::vector<size_t> order(log_mass.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return log_mass[a] > log_mass[b]; });
  size_t keep = order.size();
  if (cfg.top_k) keep = std::min(keep, *cfg.top_k);
  if (cfg.top_p && *cfg.top_p < 1.0) {
    double zt = log_sum_exp(log_mass);
    double acc = 0.0;
    size_t need = 0;
    while (need < keep) {
      acc += std::exp(log_mass[order[need]] - zt);
      ++need;
      if (acc >= *cfg.top_p) break;
    }
    keep = need;
  }
  if (keep == 0 || log_mass[order[0]] == kNegInf) {
    throw std::invalid_argument("transform truncated all probability mass");
  }
  std::vector<double> out(log_mass.size(), kNegInf);
  for (size_t i = 0; i < keep; ++i) out[order[i]] = log_mass[order[i]];
  double zz = log_sum_exp(out);
  for (double& x : out) {
    if (x != kNegInf) x -= zz;
  }
  return out;
}

ByteSampler::ByteSampler(const LanguageModel& lm, const Tokenizer& tok, ValidityCache& validity)
    : lm_(lm), tok_(tok), validity_(validity), vct_(tok, validity) {
  if (lm.vocab_size() != tok.vocab_size()) {
    throw std::invalid_argument("model and tokenizer vocabulary sizes differ");
  }
}

const TokenDistribution& ByteSampler::node_dist(const Vct::Node* node) {
  TokenSequence ctx = vct_.context_of(node);
  std::string key = seq_key(ctx);
  auto it = cache_.find(key);
  if (it == cache_.end()) {
    // fall through to path computation, which fills the cache
    path_logprob(node);
    it = cache_.find(key);
  }
  return *it->second.second;
}

// Chain log probability of the node's full context (trunk + branch path),
// cached per context. Fills distributions along the way.
double ByteSampler::path_logprob(const Vct::Node* node) {
  TokenSequence ctx = vct_.context_of(node);
  double lp = 0.0;
  // find the longest cached prefix
  size_t have = ctx.size();
  std::string key = seq_key(ctx);
  while (true) {
    auto it = cache_.find(seq_key(std::span<const TokenId>(ctx.data(), have)));
    if (it != cache_.end()) {
      lp = it->second.first;
      break;
    }
    if (have == 0) break;
    --have;
  }
  for (size_t i = have; i <= ctx.size(); ++i) {
    std::string k = seq_key(std::span<const TokenId>(ctx.data(), i));
    auto it = cache_.find(k);
    std::shared_ptr<TokenDistribution> dist;
    if (it == cache_.end()) {
      dist = std::make_shared<TokenDistribution>(
          lm_.next_logprobs(std::span<const TokenId>(ctx.data(), i)));
      ++inference_calls_;
      cache_.emplace(k, std::make_pair(lp, dist));
    } else {
      dist = it->second.second;
      lp = it->second.first;
    }
    if (i < ctx.size()) {
      TokenId next = ctx[i];
      if (next < 0 || static_cast<size_t>(next) >= dist->vocab_size()) {
        throw std::out_of_range("token outside the model vocabulary");
      }
      lp += dist->logprobs[next];
    }
  }
  auto it = cache_.find(key);
  return it->second.first;
}

void ByteSampler::feed_prompt(std::string_view prompt) {
  for (unsigned char b : prompt) vct_.feed_byte(b);
}

void ByteSampler::feed_special(TokenId special) { vct_.feed_special(special); }

ByteSampler::LeafMasses ByteSampler::leaf_masses(const SamplerConfig* token_transform) {
  LeafMasses out;
  out.groups = vct_.leaf_groups();
  const uint64_t frontier = vct_.bytes_consumed();
  for (const auto& g : out.groups) {
    double base = path_logprob(g.node);
    const TokenDistribution& d = node_dist(g.node);
    std::vector<double> lp = d.logprobs;
    if (token_transform) lp = apply_transform(*token_transform, std::move(lp));
    std::vector<std::pair<TokenId, double>> masses;
    g.mask.for_each_set([&](size_t t) {
      double step = lp[t];
      if (step != kNegInf) masses.emplace_back(static_cast<TokenId>(t), base + step);
    });
    out.masses.push_back(std::move(masses));
  }
  if (vct_.trunk_covers_exactly() && frontier > 0) {
    out.has_trunk_exact = true;
    out.trunk_exact_logprob = path_logprob(vct_.root());
  }
  return out;
}

double ByteSampler::prefix_logprob(std::string_view prompt) {
  feed_prompt(prompt);
  if (vct_.bytes_consumed() == 0) return 0.0;  // the empty prefix is certain
  LeafMasses lm = leaf_masses(nullptr);
  double total = lm.has_trunk_exact ? lm.trunk_exact_logprob : kNegInf;
  for (const auto& group : lm.masses) {
    for (const auto& [t, mass] : group) total = lse2(total, mass);
  }
  return total;
}

ByteDistribution ByteSampler::next_byte_distribution() {
  ByteDistribution dist;
  const uint64_t frontier = vct_.bytes_consumed();
  // Strict-overhang covering leaves grouped by their next byte.
  LeafMasses lm = leaf_masses(nullptr);
  dist.log_total = lm.has_trunk_exact ? lm.trunk_exact_logprob : kNegInf;
  for (const auto& group : lm.masses) {
    for (const auto& [t, mass] : group) dist.log_total = lse2(dist.log_total, mass);
  }
  if (frontier == 0) dist.log_total = 0.0;  // the empty prefix is certain
  if (frontier > 0) {
    for (size_t gi = 0; gi < lm.groups.size(); ++gi) {
      const auto& g = lm.groups[gi];
      const size_t tail_len = static_cast<size_t>(frontier - g.node->end);
      for (const auto& [t, mass] : lm.masses[gi]) {
        const std::string& tb = tok_.token_bytes(t);
        if (tb.size() <= tail_len) continue;  // exact-boundary: handled below
        uint8_t b = static_cast<uint8_t>(tb[tail_len]);
        dist.log_mass[b] = lse2(dist.log_mass[b], mass);
      }
    }
  }
  // Exact-boundary paths contribute through their next-token distribution,
  // end-of-sequence, and (opt-in) special-token generation options. At
  // stream start the empty path is the unique exact-boundary path.
  for (const Vct::Node* m : vct_.frontier_nodes()) {
    double base = path_logprob(m);
    const TokenDistribution& d = node_dist(m);
    Bitset succ = vct_.frontier_successors(m);
    succ.for_each_set([&](size_t t) {
      double step = d.logprobs[t];
      if (step == kNegInf) return;
      const std::string& tb = tok_.token_bytes(static_cast<TokenId>(t));
      uint8_t b = static_cast<uint8_t>(tb[0]);
      dist.log_mass[b] = lse2(dist.log_mass[b], base + step);
    });
    dist.log_mass[ByteDistribution::kEot] =
        lse2(dist.log_mass[ByteDistribution::kEot], base + d.eos());
    for (TokenId sp : tok_.special_ids()) {
      if (static_cast<size_t>(sp) >= d.vocab_size()) continue;
      double step = d.logprobs[sp];
      if (step == kNegInf) continue;
      bool found = false;
      for (auto& [id, lp] : dist.specials) {
        if (id == sp) {
          lp = lse2(lp, base + step);
          found = true;
        }
      }
      if (!found) dist.specials.emplace_back(sp, base + step);
    }
  }
  return dist;
}

size_t ByteSampler::sample_event(const SamplerConfig& cfg, std::mt19937_64& rng) {
  ByteDistribution d = next_byte_distribution();
  std::vector<double> events = d.normalized();
  size_t base_events = 257;
  if (!cfg.specials_as_events) events.resize(base_events);
  std::vector<double> transformed = apply_transform(cfg, std::move(events));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double r = u(rng);
  double acc = 0.0;
  size_t pick = 0;
  bool picked = false;
  for (size_t i = 0; i < transformed.size(); ++i) {
    if (transformed[i] == kNegInf) continue;
    pick = i;  // last event with mass absorbs rounding leftovers
    acc += std::exp(transformed[i]);
    if (r <= acc) {
      picked = true;
      break;
    }
  }
  (void)picked;
  if (pick < 256) {
    vct_.feed_byte(static_cast<uint8_t>(pick));
  } else if (pick >= base_events) {
    vct_.feed_special(d.specials[pick - base_events].first);
  }
  return pick;
}

std::string ByteSampler::sample_bytes(size_t n, const SamplerConfig& cfg, std::mt19937_64& rng) {
  std::string out;
  while (out.size() < n) {
    size_t ev = sample_event(cfg, rng);
    if (ev == ByteDistribution::kEot) break;
    if (ev < 256) out.push_back(static_cast<char>(ev));
    // special-token events extend the stream but add no bytes
  }
  return out;
}

TokenSequence ByteSampler::sample_completion(const SamplerConfig& cfg, std::mt19937_64& rng) {
  cfg.validate();
  const SamplerConfig* token_cfg =
      (cfg.transform_level == TransformLevel::kToken) ? &cfg : nullptr;
  LeafMasses lm = leaf_masses(token_cfg);
  struct Choice {
    const Vct::Node* node;
    TokenId token;
    double mass;
  };
  std::vector<Choice> choices;
  double z = lm.has_trunk_exact ? lm.trunk_exact_logprob : kNegInf;
  if (lm.has_trunk_exact) {
    choices.push_back({nullptr, -1, lm.trunk_exact_logprob});
  }
  for (size_t gi = 0; gi < lm.groups.size(); ++gi) {
    for (const auto& [t, mass] : lm.masses[gi]) {
      choices.push_back({lm.groups[gi].node, t, mass});
      z = lse2(z, mass);
    }
  }
  if (choices.empty()) throw DeadTreeError(vct_.bytes_consumed());
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double r = u(rng);
  double acc = 0.0;
  size_t pick = choices.size() - 1;
  for (size_t i = 0; i < choices.size(); ++i) {
    acc += std::exp(choices[i].mass - z);
    if (r <= acc) {
      pick = i;
      break;
    }
  }
  if (choices[pick].node != nullptr) {
    vct_.commit_leaf(choices[pick].node, choices[pick].token);
  }

  // Ordinary token-level ancestral sampling from the committed covering.
  TokenSequence seq = vct_.trunk();
  for (size_t step = 0; step < cfg.max_tokens; ++step) {
    TokenDistribution d = lm_.next_logprobs(seq);
    ++inference_calls_;
    std::vector<double> lp = d.logprobs;
    SamplerConfig token_level = cfg;
    token_level.transform_level = TransformLevel::kToken;
    lp = apply_transform(token_level, std::move(lp));
    double rr = u(rng);
    double a = 0.0;
    size_t tk = 0;
    for (size_t i = 0; i < lp.size(); ++i) {
      if (lp[i] == kNegInf) continue;
      tk = i;  // last token with mass absorbs rounding leftovers
      a += std::exp(lp[i]);
      if (rr <= a) break;
    }
    if (tk == d.vocab_size()) break;  // end of sequence
    seq.push_back(static_cast<TokenId>(tk));
  }
  return seq;
}

ByteDistribution ensemble_next_byte(std::vector<CompositeMember> members) {
  if (members.empty()) throw std::invalid_argument("ensemble needs at least one member");
  double wsum = 0.0;
  for (const auto& m : members) {
    if (m.weight <= 0) throw std::invalid_argument("ensemble weights must be positive");
    wsum += m.weight;
  }
  ByteDistribution out;
  out.log_total = 0.0;  // members contribute normalized conditionals
  for (const auto& m : members) {
    ByteDistribution d = m.sampler->next_byte_distribution();
    std::vector<double> p = d.normalized();
    double lw = std::log(m.weight / wsum);
    for (size_t i = 0; i < 257; ++i) {
      out.log_mass[i] = lse2(out.log_mass[i], lw + p[i]);
    }
  }
  return out;
}

ByteDistribution proxy_next_byte(ByteSampler& base, ByteSampler& expert, ByteSampler& anti) {
  std::vector<double> pb = base.next_byte_distribution().normalized();
  std::vector<double> pe = expert.next_byte_distribution().normalized();
  std::vector<double> pa = anti.next_byte_distribution().normalized();
  ByteDistribution out;
  double z = kNegInf;
  for (size_t i = 0; i < 257; ++i) {
    // Event-wise log p_base + (log p_expert - log p_anti). Zero-probability
    // conventions: a ratio of two zero masses cancels to one; expert mass
    // over an event the anti-expert excludes is clamped to a large finite
    // boost instead of an infinity.
    double ratio;
    if (pe[i] == kNegInf && pa[i] == kNegInf) {
      ratio = 0.0;
    } else if (pa[i] == kNegInf) {
      ratio = 1e3;
    } else if (pe[i] == kNegInf) {
      ratio = kNegInf;
    } else {
      ratio = pe[i] - pa[i];
    }
    double v = (pb[i] == kNegInf || ratio == kNegInf) ? kNegInf : pb[i] + ratio;
    out.log_mass[i] = v;
    z = lse2(z, v);
  }
  if (z == kNegInf) throw std::runtime_error("proxy combination has no mass");
  out.log_total = 0.0;
  for (double& x : out.log_mass) {
    if (x != kNegInf) x -= z;
  }
  return out;
}

void composite_feed_byte(std::vector<ByteSampler*> members, uint8_t byte) {
  for (ByteSampler* m : members) m->vct().feed_byte(byte);
}

}  // namespace bytelm
