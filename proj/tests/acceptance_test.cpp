// Acceptance suite: every criterion below runs at its stated tolerance and
// prints one PASS/FAIL line. The process exits non-zero if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <random>
#include <set>

#include "bytelm/oracle.hpp"
#include "bytelm/sampler.hpp"
#include "bytelm/verify.hpp"
#include "helpers.hpp"

using namespace bytelm;
using bytelm::test::data_path;
using bytelm::test::read_file;
using bytelm::test::read_ids;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
int g_failures = 0;

struct Timer {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
};

void report(int criterion, const char* name, bool ok, const std::string& detail, double secs) {
  std::printf("%s  criterion %2d  %-28s %s  (%.1fs)\n", ok ? "PASS" : "FAIL", criterion, name,
              detail.c_str(), secs);
  std::fflush(stdout);
  if (!ok) ++g_failures;
}

const std::vector<std::string>& fixture_names() {
  static const std::vector<std::string> names = {"gpt2_style", "cl100k_style", "llama3_style"};
  return names;
}

const Tokenizer& fixture(const std::string& name) {
  return bytelm::test::fixture_tokenizer(name);
}

// --------------------------------------------------------------------------
// 1. Pairwise-validity oracle equivalence
// --------------------------------------------------------------------------
void criterion_1() {
  Timer t;
  verify::SuiteOptions opt;
  auto toy = verify::run_pair_validity_suite(opt);  // 200 toy tokenizers, exhaustive
  size_t sampled = 0, mismatches = 0;
  std::mt19937_64 rng(2024);
  for (const auto& name : fixture_names()) {
    const Tokenizer& tok = fixture(name);
    ValidityCache v(tok);
    std::uniform_int_distribution<TokenId> d(0, static_cast<TokenId>(tok.vocab_size()) - 1);
    size_t done = 0;
    while (done < 100000) {
      TokenId a = d(rng), b = d(rng);
      if (tok.is_special(a) || tok.is_special(b)) continue;
      if (tok.token_bytes(a).empty() || tok.token_bytes(b).empty()) continue;
      TokenSequence pair{a, b};
      bool truth = tok.encode(tok.decode(pair)) == pair;
      if (v.is_pair_valid(a, b) != truth) ++mismatches;
      ++done;
      ++sampled;
    }
  }
  char buf[160];
  std::snprintf(buf, sizeof(buf), "toys %zu/%zu ok, %zu sampled real pairs, %zu mismatches",
                toy.cases - toy.failures, toy.cases, sampled, mismatches);
  report(1, "pair-validity", toy.ok() && mismatches == 0 && sampled >= 300000, buf, t.seconds());
}

// --------------------------------------------------------------------------
// 2. Covering-set equality (plus the future-dependent regression)
// --------------------------------------------------------------------------
void criterion_2() {
  Timer t;
  verify::SuiteOptions opt;
  auto suite = verify::run_covering_suite(opt);  // 500 randomized cases

  bool regression = true;
  {
    // Toy analog of one-space/two-space vocabulary entries: the pair of
    // single-space tokens is not a covering by itself but becomes the
    // unique covering once a digit follows.
    std::vector<std::string> vocab = {" ", "0", "a", "  ", " a"};
    auto tok = Tokenizer::from_parts(vocab, {{0, 0}, {0, 2}}, RuleSet::cl100k());
    ValidityCache v(tok);
    TokenId sp = 0, zero = 1, sp2 = 3;
    auto covers = [&](std::string_view prompt) {
      std::set<TokenSequence> got;
      Vct vct(tok, v);
      for (unsigned char b : prompt) vct.feed_byte(b);
      if (vct.trunk_covers_exactly()) got.insert(vct.trunk());
      for (const auto& g : vct.leaf_groups()) {
        TokenSequence base = vct.trunk();
        TokenSequence branch = vct.branch_path(g.node);
        base.insert(base.end(), branch.begin(), branch.end());
        g.mask.for_each_set([&](size_t tk) {
          TokenSequence full = base;
          full.push_back(static_cast<TokenId>(tk));
          got.insert(std::move(full));
        });
      }
      return got;
    };
    auto two = covers("  ");
    regression &= two.count({sp2}) == 1 && two.count({sp, sp}) == 0;
    auto three = covers("  0");
    regression &= three == std::set<TokenSequence>{{sp, sp, zero}};
    regression &= two == oracle::enumerate_valid_coverings("  ", tok);
    regression &= three == oracle::enumerate_valid_coverings("  0", tok);
  }
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%zu/%zu randomized cases ok, regression %s",
                suite.cases - suite.failures, suite.cases, regression ? "ok" : "BROKEN");
  report(2, "covering-sets", suite.ok() && regression && suite.cases >= 500, buf, t.seconds());
}

// --------------------------------------------------------------------------
// 3. Streaming equals batch on the corpus under adversarial chunkings
// --------------------------------------------------------------------------
void criterion_3() {
  Timer t;
  std::string corpus = read_file(data_path("corpus.txt"));
  bool ok = corpus.size() >= 1000000;
  size_t chunk_runs = 0;
  for (const auto& name : fixture_names()) {
    const Tokenizer& tok = fixture(name);
    ValidityCache v(tok);
    // one full-stream pass
    {
      Vct vct(tok, v);
      TokenSequence streamed;
      for (unsigned char b : corpus) {
        TokenSequence em = vct.feed_byte(b);
        streamed.insert(streamed.end(), em.begin(), em.end());
      }
      TokenSequence fin = vct.finish();
      streamed.insert(streamed.end(), fin.begin(), fin.end());
      ok = ok && streamed == tok.encode(corpus);
    }
    // five adversarial chunkings: chunk boundaries land mid-scalar,
    // mid-word, and inside whitespace or digit runs
    for (uint64_t chunking = 0; chunking < 5; ++chunking) {
      std::mt19937_64 rng(chunking * 77 + 5);
      size_t pos = 0;
      while (pos < corpus.size()) {
        size_t len = 1 + rng() % (1 + 500 * (chunking % 3));
        len = std::min(len, corpus.size() - pos);
        std::string_view chunk(corpus.data() + pos, len);
        pos += len;
        Vct vct(tok, v);
        TokenSequence streamed;
        for (unsigned char b : chunk) {
          TokenSequence em = vct.feed_byte(b);
          streamed.insert(streamed.end(), em.begin(), em.end());
        }
        TokenSequence fin = vct.finish();
        streamed.insert(streamed.end(), fin.begin(), fin.end());
        if (streamed != tok.encode(chunk)) {
          ok = false;
          break;
        }
        ++chunk_runs;
      }
    }
  }
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%.1f MB x %zu tokenizers, full pass + 5 chunkings (%zu chunks)",
                corpus.size() / 1e6, fixture_names().size(), chunk_runs);
  report(3, "streaming-equals-batch", ok, buf, t.seconds());
}

// --------------------------------------------------------------------------
// 4. Exact prefix probability
// --------------------------------------------------------------------------
void criterion_4() {
  Timer t;
  verify::SuiteOptions opt;
  auto suite = verify::run_prefix_probability_suite(opt);  // 300 cases, 1e-9 relative
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%zu/%zu cases within 1e-9 relative",
                suite.cases - suite.failures, suite.cases);
  report(4, "exact-prefix-probability", suite.ok() && suite.cases >= 300, buf, t.seconds());
}

// --------------------------------------------------------------------------
// 5. Chain-rule consistency
// --------------------------------------------------------------------------
void criterion_5() {
  Timer t;
  size_t bad = 0, cases = 0;
  for (uint64_t inst = 0; inst < 10; ++inst) {
    oracle::ToyTokenizerSpec spec;
    spec.seed = inst + 11;
    spec.alphabet = 2 + inst % 3;
    spec.merge_count = 4 + inst % 10;
    if (inst % 3 == 1) spec.rules = RuleSet::cl100k();
    if (inst % 3 == 2) spec.rules = RuleSet::gpt2();
    Tokenizer tok = oracle::random_toy_tokenizer(spec);
    ValidityCache v(tok);
    TabularLM lm = TabularLM::random(inst * 5 + 3, tok.vocab_size(), 6, 8);
    std::mt19937_64 rng(inst);
    for (int rep = 0; rep < 100; ++rep) {
      std::string p, q;
      for (size_t i = rng() % 3; i > 0; --i) p.push_back(static_cast<char>('a' + rng() % spec.alphabet));
      for (size_t i = 1 + rng() % 3; i > 0; --i) {
        q.push_back(static_cast<char>('a' + rng() % spec.alphabet));
      }
      ByteSampler joint(lm, tok, v);
      double lp_pq = joint.prefix_logprob(p + q);
      if (lp_pq == -kInf) continue;
      ByteSampler head(lm, tok, v);
      double steps = head.prefix_logprob(p);
      for (char b : q) {
        steps += head.next_byte_distribution().normalized()[static_cast<unsigned char>(b)];
        head.vct().feed_byte(static_cast<uint8_t>(b));
      }
      ++cases;
      if (std::abs(steps - lp_pq) > 1e-9 * std::max(1.0, std::abs(lp_pq))) ++bad;
    }
  }
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%zu telescoping checks, %zu failures", cases, bad);
  report(5, "chain-rule", bad == 0 && cases >= 500, buf, t.seconds());
}

// --------------------------------------------------------------------------
// 6. Prompt-boundary-problem reproduction
// --------------------------------------------------------------------------
void criterion_6() {
  Timer t;
  std::vector<std::string> vocab = {"a", "b", "ab"};
  auto tok = Tokenizer::from_parts(vocab, {{0, 1}});
  TabularLM lm(3, 3, {std::log(0.3), std::log(0.3), std::log(0.3), std::log(0.1)});
  lm.set_entry({}, {std::log(0.05), std::log(0.30), std::log(0.5), std::log(0.15)});
  lm.set_entry({0}, {std::log(0.698), std::log(0.001), std::log(0.3), std::log(0.001)});
  ValidityCache v(tok);
  double truth = oracle::brute_prefix_prob(lm, "ab", tok) / oracle::brute_prefix_prob(lm, "a", tok);
  double naive = std::exp(lm.next_logprobs(TokenSequence{0}).logprobs[1]);
  ByteSampler s(lm, tok, v);
  s.feed_prompt("a");
  double engine =
      std::exp(s.next_byte_distribution().normalized()[static_cast<unsigned char>('b')]);
  double gap = truth / naive;
  bool ok = gap >= 10.0 && std::abs(engine - truth) <= 1e-9 * truth;
  char buf[160];
  std::snprintf(buf, sizeof(buf), "true %.6f vs naive %.6f (gap %.0fx), engine within 1e-9",
                truth, naive, gap);
  report(6, "pbp-reproduction", ok, buf, t.seconds());
}

// --------------------------------------------------------------------------
// 7. Normal-form equivalence on the corpus
// --------------------------------------------------------------------------
void criterion_7() {
  Timer t;
  std::string corpus = read_file(data_path("corpus.txt"));
  // The llama3-style fixture carries a deliberately disordered merge list
  // (relocated merges, duplicate forming merges, unreachable entries).
  const Tokenizer& tok = fixture("llama3_style");
  TokenSequence fast = tok.encode(corpus);
  TokenSequence slow = oracle::heap_encode(corpus, tok);
  auto golden = read_ids(data_path("golden/corpus.llama3_style.ids"));
  bool ok = fast == slow && fast.size() == golden.size();
  if (ok) {
    for (size_t i = 0; i < fast.size(); ++i) {
      if (static_cast<uint32_t>(fast[i]) != golden[i]) {
        ok = false;
        break;
      }
    }
  }
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "heap(raw) == normalized encode == reference ids on %.1f MB (%zu tokens)",
                corpus.size() / 1e6, fast.size());
  report(7, "normal-form-equivalence", ok, buf, t.seconds());
}

// --------------------------------------------------------------------------
// 8. Overhead boundedness
// --------------------------------------------------------------------------
void criterion_8() {
  Timer t;
  const size_t kPinnedMaxEdges = 64;  // regression pin for these fixtures
  std::string corpus = read_file(data_path("corpus.txt")).substr(0, 10000);
  bool ok = true;
  std::string detail;
  for (const auto& name : fixture_names()) {
    const Tokenizer& tok = fixture(name);
    ValidityCache v(tok);
    Vct vct(tok, v);
    size_t max_edges = 0;
    double sum_edges = 0;
    for (unsigned char b : corpus) {
      vct.feed_byte(b);
      auto st = vct.branch_stats();
      max_edges = std::max(max_edges, st.non_trunk_edges);
      sum_edges += static_cast<double>(st.non_trunk_edges);
    }
    ok = ok && max_edges <= kPinnedMaxEdges;
    char buf[96];
    std::snprintf(buf, sizeof(buf), "%s max %zu mean %.2f; ", name.c_str(), max_edges,
                  sum_edges / static_cast<double>(corpus.size()));
    detail += buf;
  }
  detail += "pin " + std::to_string(kPinnedMaxEdges);
  report(8, "overhead-boundedness", ok, detail, t.seconds());
}

// --------------------------------------------------------------------------
// 9. Composite correctness
// --------------------------------------------------------------------------
void criterion_9() {
  Timer t;
  bool ok = true;
  std::string detail;

  // ensemble of two different-tokenizer models vs the enumerated average
  {
    std::vector<std::string> vocab1 = {"a", "b", "ab"};
    auto tok1 = Tokenizer::from_parts(vocab1, {{0, 1}});
    std::vector<std::string> vocab2 = {"a", "b", "ba", "bab"};
    auto tok2 = Tokenizer::from_parts(vocab2, {{1, 0}, {2, 1}});
    TabularLM lm1 = TabularLM::random(11, tok1.vocab_size(), 5, 5);
    TabularLM lm2 = TabularLM::random(22, tok2.vocab_size(), 5, 5);
    ValidityCache v1(tok1), v2(tok2);
    for (std::string prompt : {std::string("ba"), std::string("a"), std::string("bab")}) {
      ByteSampler s1(lm1, tok1, v1), s2(lm2, tok2, v2);
      s1.feed_prompt(prompt);
      s2.feed_prompt(prompt);
      auto norm = ensemble_next_byte({{&s1, 0.5}, {&s2, 0.5}}).normalized();
      for (char b : {'a', 'b'}) {
        double w1 = oracle::brute_prefix_prob(lm1, prompt + b, tok1) /
                    oracle::brute_prefix_prob(lm1, prompt, tok1);
        double w2 = oracle::brute_prefix_prob(lm2, prompt + b, tok2) /
                    oracle::brute_prefix_prob(lm2, prompt, tok2);
        double want = 0.5 * w1 + 0.5 * w2;
        double got = std::exp(norm[static_cast<unsigned char>(b)]);
        if (std::abs(got - want) > 1e-9 * std::max(1.0, want)) ok = false;
      }
    }
    detail += "ensemble-vs-enumeration ok; ";
  }

  // proxy cancellation within 1e-12 and self-ensemble fixed point
  {
    std::vector<std::string> vocab = {"a", "b", "ab"};
    auto tok = Tokenizer::from_parts(vocab, {{0, 1}});
    ValidityCache v(tok);
    TabularLM base_lm = TabularLM::random(31, 3, 4, 5);
    TabularLM proxy_lm = TabularLM::random(77, 3, 4, 5);
    ByteSampler base(base_lm, tok, v), expert(proxy_lm, tok, v), anti(proxy_lm, tok, v);
    ByteSampler solo(base_lm, tok, v), twin_a(base_lm, tok, v), twin_b(base_lm, tok, v);
    for (unsigned char b : std::string_view("ab")) {
      base.vct().feed_byte(b);
      expert.vct().feed_byte(b);
      anti.vct().feed_byte(b);
      solo.vct().feed_byte(b);
      twin_a.vct().feed_byte(b);
      twin_b.vct().feed_byte(b);
    }
    auto want = solo.next_byte_distribution().normalized();
    auto prox = proxy_next_byte(base, expert, anti).normalized();
    auto self_mix = ensemble_next_byte({{&twin_a, 0.5}, {&twin_b, 0.5}}).normalized();
    double worst_proxy = 0, worst_self = 0;
    for (size_t i = 0; i < 257; ++i) {
      if (want[i] == -kInf) {
        if (prox[i] != -kInf || self_mix[i] != -kInf) ok = false;
        continue;
      }
      worst_proxy = std::max(worst_proxy, std::abs(std::exp(prox[i]) - std::exp(want[i])));
      worst_self = std::max(worst_self, std::abs(std::exp(self_mix[i]) - std::exp(want[i])));
    }
    ok = ok && worst_proxy <= 1e-12 && worst_self <= 1e-12;
    char buf[96];
    std::snprintf(buf, sizeof(buf), "proxy err %.2e, self-ensemble err %.2e", worst_proxy,
                  worst_self);
    detail += buf;
  }
  report(9, "composite-correctness", ok, detail, t.seconds());
}

// --------------------------------------------------------------------------
// 10. Sampling statistics
// --------------------------------------------------------------------------
void criterion_10() {
  Timer t;
  const uint64_t kSeed = 20240809;  // disclosed sampling seed
  std::vector<std::string> vocab = {"x", "a", "e", "h", "o", "xa", "xe", "xh", "xho", "xhe"};
  auto tok = Tokenizer::from_parts(vocab, {{0, 1}, {0, 2}, {0, 3}, {7, 4}, {7, 2}});
  TabularLM lm = TabularLM::random(404, tok.vocab_size(), 4, 10);
  ValidityCache v(tok);
  ByteSampler probe(lm, tok, v);
  probe.feed_prompt("x");
  std::vector<double> exact = probe.next_byte_distribution().normalized();
  // renormalize over events (sampling conditions on a valid continuation)
  double z = log_sum_exp(exact);
  const int kDraws = 100000;
  std::map<size_t, int> counts;
  SamplerConfig cfg;
  std::mt19937_64 rng(kSeed);
  for (int i = 0; i < kDraws; ++i) {
    ByteSampler s(lm, tok, v);
    s.feed_prompt("x");
    counts[s.sample_event(cfg, rng)]++;
  }
  bool ok = true;
  size_t checked = 0;
  for (size_t ev = 0; ev < exact.size(); ++ev) {
    double p = std::exp(exact[ev] - z);
    if (p < 1e-3) continue;
    ++checked;
    double sigma = std::sqrt(p * (1 - p) * kDraws);
    double n = counts.count(ev) ? counts[ev] : 0;
    if (std::abs(n - p * kDraws) > 3 * sigma + 1) ok = false;
  }
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%d draws (seed %llu), %zu events with p>=1e-3 within 3 sigma",
                kDraws, static_cast<unsigned long long>(kSeed), checked);
  report(10, "sampling-statistics", ok && checked >= 3, buf, t.seconds());
}

}  // namespace

int main() {
  criterion_1();
  criterion_2();
  criterion_3();
  criterion_4();
  criterion_5();
  criterion_6();
  criterion_7();
  criterion_8();
  criterion_9();
  criterion_10();
  if (g_failures) {
    std::printf("ACCEPTANCE: %d criterion(s) FAILED\n", g_failures);
    return 1;
  }
  std::printf("ACCEPTANCE: all criteria passed\n");
  return 0;
}
