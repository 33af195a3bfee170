#include "bytelm/verify.hpp"

#include <chrono>
#include <cmath>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "bytelm/sampler.hpp"

namespace bytelm::verify {

namespace {

using Clock = std::chrono::steady_clock;

oracle::ToyTokenizerSpec toy_spec(uint64_t seed) {
  oracle::ToyTokenizerSpec spec;
  spec.seed = seed;
  spec.alphabet = 2 + seed % 5;
  spec.merge_count = 4 + seed % 20;
  switch (seed % 4) {
    case 1:
      spec.rules = RuleSet::cl100k();
      break;
    case 2:
      spec.rules = RuleSet::gpt2();
      break;
    default:
      break;
  }
  spec.ignore_merges = (seed % 5 == 0);
  return spec;
}

std::string random_prompt(std::mt19937_64& rng, uint32_t alphabet, size_t max_len,
                          size_t min_len = 1) {
  size_t len = min_len + rng() % (max_len - min_len + 1);
  std::string s;
  for (size_t i = 0; i < len; ++i) s.push_back(static_cast<char>('a' + rng() % alphabet));
  return s;
}

// Runs `body(case_index)` over the case range, optionally across threads.
template <typename Body>
void run_cases(const SuiteOptions& opt, size_t cases, SuiteResult& res, const Body& body) {
  auto t0 = Clock::now();
  res.cases = cases;
  if (opt.jobs <= 1) {
    for (size_t i = 0; i < cases; ++i) body(i, res);
  } else {
    std::vector<SuiteResult> partial(opt.jobs);
    std::vector<std::thread> threads;
    for (size_t j = 0; j < opt.jobs; ++j) {
      threads.emplace_back([&, j] {
        for (size_t i = j; i < cases; i += opt.jobs) body(i, partial[j]);
      });
    }
    for (auto& th : threads) th.join();
    for (auto& p : partial) {
      res.failures += p.failures;
      if (res.first_failure.empty()) res.first_failure = p.first_failure;
    }
  }
  res.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
}

void record_failure(SuiteResult& res, const std::string& what) {
  ++res.failures;
  if (res.first_failure.empty()) res.first_failure = what;
}

}  // namespace

TabularLM make_valid_supported_lm(uint64_t seed, const Tokenizer& tok, ValidityCache& validity,
                                  uint32_t horizon, size_t entries) {
  std::mt19937_64 rng(seed);
  std::exponential_distribution<double> ex(1.0);
  const size_t n = tok.vocab_size();
  auto draw_row = [&](const Bitset* allowed) {
    std::vector<double> lp(n + 1, -std::numeric_limits<double>::infinity());
    for (size_t i = 0; i < n; ++i) {
      if (allowed && !allowed->test(i)) continue;
      if (tok.is_special(static_cast<TokenId>(i))) continue;
      lp[i] = std::log(ex(rng) + 1e-4);
    }
    lp[n] = std::log(ex(rng) + 1e-4);  // end of sequence
    return lp;
  };
  TabularLM lm(n, horizon, draw_row(&validity.standalone_mask()));
  // The default row backs off arbitrary contexts; explicit rows cover the
  // empty context and random short ones, each restricted to the valid
  // successors of its last token.
  lm.set_entry({}, draw_row(&validity.standalone_mask()));
  std::uniform_int_distribution<TokenId> tok_d(0, static_cast<TokenId>(n) - 1);
  for (size_t e = 0; e < entries; ++e) {
    size_t len = 1 + rng() % (horizon > 1 ? horizon - 1 : 1);
    TokenSequence ctx(len);
    for (TokenId& t : ctx) t = tok_d(rng);
    const Bitset& row = validity.valid_successors(ctx.back());
    lm.set_entry(std::move(ctx), draw_row(&row));
  }
  return lm;
}

SuiteResult run_pair_validity_suite(const SuiteOptions& opt) {
  SuiteResult res;
  res.name = "pair-validity";
  size_t tokenizers = static_cast<size_t>(std::llround(200 * opt.scale));
  run_cases(opt, tokenizers, res, [&](size_t i, SuiteResult& r) {
    uint64_t seed = opt.seed * 1000003 + i;
    auto spec = toy_spec(seed);
    spec.merge_count = 4 + seed % 36;  // vocab up to ~8 + 36 < 64
    Tokenizer tok = oracle::random_toy_tokenizer(spec);
    ValidityCache v(tok);
    for (TokenId a = 0; static_cast<size_t>(a) < tok.vocab_size(); ++a) {
      for (TokenId b = 0; static_cast<size_t>(b) < tok.vocab_size(); ++b) {
        bool fast = v.is_pair_valid(a, b);
        if (opt.inject_pair_fault && a == 0 && b == 0) fast = !fast;
        TokenSequence pair{a, b};
        bool truth = tok.encode(tok.decode(pair)) == pair;
        if (fast != truth) {
          std::ostringstream os;
          os << "pair (" << a << "," << b << ") seed " << seed;
          record_failure(r, os.str());
        }
      }
    }
  });
  return res;
}

SuiteResult run_covering_suite(const SuiteOptions& opt) {
  SuiteResult res;
  res.name = "covering-sets";
  size_t cases = static_cast<size_t>(std::llround(500 * opt.scale));
  run_cases(opt, cases, res, [&](size_t i, SuiteResult& r) {
    uint64_t seed = opt.seed * 7919 + i;
    std::mt19937_64 rng(seed);
    auto spec = toy_spec(seed % 97);
    Tokenizer tok = oracle::random_toy_tokenizer(spec);
    ValidityCache v(tok);
    std::string prompt = random_prompt(rng, spec.alphabet, 12);
    auto want = oracle::enumerate_valid_coverings(prompt, tok);
    std::set<TokenSequence> got;
    try {
      Vct vct(tok, v);
      for (unsigned char b : prompt) vct.feed_byte(b);
      if (vct.trunk_covers_exactly()) got.insert(vct.trunk());
      for (const auto& g : vct.leaf_groups()) {
        TokenSequence base = vct.trunk();
        TokenSequence branch = vct.branch_path(g.node);
        base.insert(base.end(), branch.begin(), branch.end());
        g.mask.for_each_set([&](size_t t) {
          TokenSequence full = base;
          full.push_back(static_cast<TokenId>(t));
          if (opt.inject_pair_fault) return;  // drop every leaf: must fail
          got.insert(std::move(full));
        });
      }
    } catch (const DeadTreeError&) {
      got.clear();
    }
    if (got != want) {
      std::ostringstream os;
      os << "covering mismatch, prompt '" << prompt << "' seed " << seed;
      record_failure(r, os.str());
    }
  });
  return res;
}

SuiteResult run_prefix_probability_suite(const SuiteOptions& opt) {
  SuiteResult res;
  res.name = "prefix-probability";
  size_t cases = static_cast<size_t>(std::llround(300 * opt.scale));
  run_cases(opt, cases, res, [&](size_t i, SuiteResult& r) {
    uint64_t seed = opt.seed * 65537 + i;
    std::mt19937_64 rng(seed);
    auto spec = toy_spec(seed % 89);
    spec.alphabet = 2 + seed % 3;
    spec.merge_count = 3 + seed % 10;
    Tokenizer tok = oracle::random_toy_tokenizer(spec);
    ValidityCache v(tok);
    uint32_t horizon = 3 + seed % 4;  // <= 6
    TabularLM lm = (i % 2 == 0)
                       ? TabularLM::random(seed + 13, tok.vocab_size(), horizon, 8)
                       : make_valid_supported_lm(seed + 13, tok, v, horizon, 8);
    std::string prompt = random_prompt(rng, spec.alphabet, 6);
    double want = oracle::brute_prefix_prob(lm, prompt, tok);
    ByteSampler s(lm, tok, v);
    double got = std::exp(s.prefix_logprob(prompt));
    if (opt.inject_pair_fault) got += 1e-3;
    double tol = 1e-9 * std::max(1.0, std::abs(want));
    if (std::abs(got - want) > tol) {
      std::ostringstream os;
      os << "prefix prob mismatch, prompt '" << prompt << "' seed " << seed << " want " << want
         << " got " << got;
      record_failure(r, os.str());
    }
  });
  return res;
}

SuiteResult run_chain_rule_suite(const SuiteOptions& opt) {
  SuiteResult res;
  res.name = "chain-rule";
  size_t cases = static_cast<size_t>(std::llround(100 * opt.scale));
  run_cases(opt, cases, res, [&](size_t i, SuiteResult& r) {
    uint64_t seed = opt.seed * 104729 + i;
    std::mt19937_64 rng(seed);
    auto spec = toy_spec(seed % 83);
    spec.alphabet = 2 + seed % 3;
    Tokenizer tok = oracle::random_toy_tokenizer(spec);
    ValidityCache v(tok);
    TabularLM lm = TabularLM::random(seed + 29, tok.vocab_size(), 6, 6);
    std::string p = random_prompt(rng, spec.alphabet, 3, 0);
    std::string q = random_prompt(rng, spec.alphabet, 3);
    ByteSampler joint(lm, tok, v);
    double lp_pq = joint.prefix_logprob(p + q);
    if (lp_pq == -std::numeric_limits<double>::infinity()) return;
    ByteSampler head(lm, tok, v);
    double steps = head.prefix_logprob(p);
    for (char b : q) {
      std::vector<double> norm = head.next_byte_distribution().normalized();
      steps += norm[static_cast<unsigned char>(b)];
      head.vct().feed_byte(static_cast<uint8_t>(b));
    }
    if (opt.inject_pair_fault) steps += 1e-3;
    if (std::abs(steps - lp_pq) > 1e-9 * std::max(1.0, std::abs(lp_pq))) {
      std::ostringstream os;
      os << "chain rule mismatch, p '" << p << "' q '" << q << "' seed " << seed;
      record_failure(r, os.str());
    }
  });
  return res;
}

std::vector<SuiteResult> run_all(const SuiteOptions& opt) {
  return {
      run_pair_validity_suite(opt),
      run_covering_suite(opt),
      run_prefix_probability_suite(opt),
      run_chain_rule_suite(opt),
  };
}

}  // namespace bytelm::verify
