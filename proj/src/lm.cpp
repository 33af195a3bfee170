#include "bytelm/lm.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace bytelm {

double log_sum_exp(std::span<const double> v) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : v) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

double seq_logprob(const LanguageModel& lm, std::span<const TokenId> seq, bool terminated) {
  double lp = 0.0;
  for (size_t i = 0; i < seq.size(); ++i) {
    TokenDistribution d = lm.next_logprobs(seq.subspan(0, i));
    if (seq[i] < 0 || static_cast<size_t>(seq[i]) >= d.vocab_size()) {
      throw std::out_of_range("seq_logprob: token outside the model vocabulary");
    }
    lp += d.logprobs[seq[i]];
  }
  if (terminated) {
    TokenDistribution d = lm.next_logprobs(seq);
    lp += d.eos();
  }
  return lp;
}

TokenDistribution UniformLM::next_logprobs(std::span<const TokenId>) const {
  TokenDistribution d;
  d.logprobs.assign(n_ + 1, -std::log(static_cast<double>(n_ + 1)));
  return d;
}

namespace {

std::string ctx_key(std::span<const TokenId> ctx) {
  std::string key;
  key.reserve(ctx.size() * 4);
  for (TokenId t : ctx) {
    key.append(reinterpret_cast<const char*>(&t), sizeof(TokenId));
  }
  return key;
}

}  // namespace

TabularLM::TabularLM(size_t vocab_size, uint32_t horizon, std::vector<double> default_logprobs)
    : n_(vocab_size), horizon_(horizon), default_(std::move(default_logprobs)) {
  if (default_.size() != n_ + 1) {
    throw std::invalid_argument("TabularLM: default distribution has wrong length");
  }
  double z = log_sum_exp(default_);
  for (double& x : default_) x -= z;
}

void TabularLM::set_entry(TokenSequence ctx, std::vector<double> logprobs) {
  if (logprobs.size() != n_ + 1) {
    throw std::invalid_argument("TabularLM: distribution has wrong length");
  }
  double z = log_sum_exp(logprobs);
  for (double& x : logprobs) x -= z;
  table_[ctx_key(ctx)] = std::move(logprobs);
}

TokenDistribution TabularLM::next_logprobs(std::span<const TokenId> ctx) const {
  TokenDistribution d;
  if (ctx.size() >= horizon_) {
    d.logprobs.assign(n_ + 1, -std::numeric_limits<double>::infinity());
    d.logprobs[n_] = 0.0;  // end of sequence with probability one
    return d;
  }
  auto it = table_.find(ctx_key(ctx));
  d.logprobs = (it != table_.end()) ? it->second : default_;
  return d;
}

TabularLM TabularLM::random(uint64_t seed, size_t vocab_size, uint32_t horizon, size_t entries) {
  std::mt19937_64 rng(seed);
  std::exponential_distribution<double> ex(1.0);
  auto draw = [&]() {
    std::vector<double> p(vocab_size + 1);
    for (double& x : p) x = std::log(ex(rng) + 1e-4);
    return p;
  };
  TabularLM lm(vocab_size, horizon, draw());
  std::uniform_int_distribution<size_t> len_d(0, horizon > 1 ? horizon - 1 : 0);
  std::uniform_int_distribution<TokenId> tok_d(0, static_cast<TokenId>(vocab_size) - 1);
  for (size_t i = 0; i < entries; ++i) {
    TokenSequence ctx(len_d(rng));
    for (TokenId& t : ctx) t = tok_d(rng);
    lm.set_entry(std::move(ctx), draw());
  }
  return lm;
}

std::vector<double> TabularLM::normalize_probs(const std::vector<double>& probs) {
  std::vector<double> lp(probs.size());
  for (size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] < 0) throw std::invalid_argument("TabularLM: negative probability");
    lp[i] = probs[i] > 0 ? std::log(probs[i]) : -std::numeric_limits<double>::infinity();
  }
  return lp;
}

TabularLM TabularLM::load_json(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open tabular model file: " + path);
  nlohmann::json doc = nlohmann::json::parse(f);
  size_t n = doc.at("vocab_size").get<size_t>();
  uint32_t h = doc.at("horizon").get<uint32_t>();
  TabularLM lm(n, h, normalize_probs(doc.at("default").get<std::vector<double>>()));
  if (doc.contains("table")) {
    for (auto it = doc["table"].begin(); it != doc["table"].end(); ++it) {
      TokenSequence ctx;
      std::istringstream ss(it.key());
      TokenId t;
      while (ss >> t) ctx.push_back(t);
      lm.set_entry(std::move(ctx), normalize_probs(it.value().get<std::vector<double>>()));
    }
  }
  return lm;
}

// ---------------------------------------------------------------------------
// ReplayLM
// ---------------------------------------------------------------------------

namespace {
constexpr char kReplayMagic[4] = {'B', 'L', 'M', 'R'};
constexpr uint8_t kReplayVersion = 1;

template <typename T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("replay file truncated");
  return v;
}

}  // namespace

void ReplayLM::write(const std::string& path, size_t vocab_size,
                     const std::vector<std::pair<TokenSequence, std::vector<float>>>& records) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write replay file: " + path);
  f.write(kReplayMagic, 4);
  put<uint8_t>(f, kReplayVersion);
  put<uint32_t>(f, static_cast<uint32_t>(vocab_size));
  put<uint32_t>(f, static_cast<uint32_t>(records.size()));
  for (const auto& [ctx, lp] : records) {
    if (lp.size() != vocab_size + 1) {
      throw std::invalid_argument("replay record has wrong distribution length");
    }
    put<uint32_t>(f, static_cast<uint32_t>(ctx.size()));
    for (TokenId t : ctx) put<uint32_t>(f, static_cast<uint32_t>(t));
    f.write(reinterpret_cast<const char*>(lp.data()),
            static_cast<std::streamsize>(lp.size() * sizeof(float)));
  }
}

ReplayLM ReplayLM::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open replay file: " + path);
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, kReplayMagic, 4) != 0) {
    throw std::runtime_error("not a replay file: " + path);
  }
  if (get<uint8_t>(f) != kReplayVersion) throw std::runtime_error("unsupported replay version");
  ReplayLM lm;
  lm.n_ = get<uint32_t>(f);
  uint32_t count = get<uint32_t>(f);
  for (uint32_t i = 0; i < count; ++i) {
    uint32_t len = get<uint32_t>(f);
    TokenSequence ctx(len);
    for (uint32_t j = 0; j < len; ++j) ctx[j] = static_cast<TokenId>(get<uint32_t>(f));
    std::vector<float> lp(lm.n_ + 1);
    f.read(reinterpret_cast<char*>(lp.data()),
           static_cast<std::streamsize>(lp.size() * sizeof(float)));
    if (!f) throw std::runtime_error("replay file truncated");
    std::vector<double> check(lp.begin(), lp.end());
    if (std::abs(log_sum_exp(check)) > 1e-5) {
      throw std::runtime_error("replay record is not a normalized distribution");
    }
    lm.records_[ctx_key(ctx)] = std::move(lp);
  }
  return lm;
}

TokenDistribution ReplayLM::next_logprobs(std::span<const TokenId> ctx) const {
  auto it = records_.find(ctx_key(ctx));
  if (it == records_.end()) {
    std::string dump;
    for (TokenId t : ctx) dump += std::to_string(t) + " ";
    throw std::runtime_error("replay miss for context [" + dump + "]");
  }
  TokenDistribution d;
  d.logprobs.assign(it->second.begin(), it->second.end());
  return d;
}

}  // namespace bytelm
