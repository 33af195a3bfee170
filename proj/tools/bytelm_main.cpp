#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "bytelm/oracle.hpp"
#include "bytelm/sampler.hpp"
#include "bytelm/verify.hpp"

using namespace bytelm;
using json = nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitVerifyFailure = 1;
constexpr int kExitUsage = 2;

struct PromptSource {
  std::string arg;
  std::string file;
  bool use_stdin = false;

  void attach(CLI::App* cmd) {
    cmd->add_option("prompt", arg, "prompt text (\\xNN escapes accepted)");
    auto* f = cmd->add_option("--file", file, "read the prompt from a file");
    auto* s = cmd->add_flag("--stdin", use_stdin, "read the prompt from standard input");
    f->excludes(s);
  }

  static std::string unescape(const std::string& s) {
    std::string out;
    for (size_t i = 0; i < s.size(); ++i) {
      if (s[i] == '\\' && i + 3 < s.size() && s[i + 1] == 'x' && std::isxdigit(s[i + 2]) &&
          std::isxdigit(s[i + 3])) {
        out.push_back(static_cast<char>(std::stoi(s.substr(i + 2, 2), nullptr, 16)));
        i += 3;
      } else if (s[i] == '\\' && i + 1 < s.size() && s[i + 1] == 'n') {
        out.push_back('\n');
        ++i;
      } else if (s[i] == '\\' && i + 1 < s.size() && s[i + 1] == 't') {
        out.push_back('\t');
        ++i;
      } else {
        out.push_back(s[i]);
      }
    }
    return out;
  }

  std::string read() const {
    if (use_stdin) {
      std::stringstream ss;
      ss << std::cin.rdbuf();
      return ss.str();
    }
    if (!file.empty()) {
      std::ifstream f(file, std::ios::binary);
      if (!f) throw std::runtime_error("cannot open prompt file: " + file);
      std::stringstream ss;
      ss << f.rdbuf();
      return ss.str();
    }
    return unescape(arg);
  }
};

std::string resolve_tokenizer_path(const std::string& path) {
  std::ifstream probe(path);
  if (probe) return path;
  if (const char* dir = std::getenv("BYTELM_TOKENIZER_DIR")) {
    std::string joined = std::string(dir) + "/" + path;
    std::ifstream p2(joined);
    if (p2) return joined;
  }
  return path;
}

// "uniform" | "tabular:path" | "replay:path"
std::unique_ptr<LanguageModel> load_lm(const std::string& spec, size_t vocab_size) {
  if (spec == "uniform") return std::make_unique<UniformLM>(vocab_size);
  auto colon = spec.find(':');
  if (colon != std::string::npos) {
    std::string kind = spec.substr(0, colon);
    std::string path = spec.substr(colon + 1);
    if (kind == "tabular") return std::make_unique<TabularLM>(TabularLM::load_json(path));
    if (kind == "replay") return std::make_unique<ReplayLM>(ReplayLM::load(path));
  }
  throw std::runtime_error("unknown model spec: " + spec +
                           " (expected uniform | tabular:PATH | replay:PATH)");
}

struct ModelBundle {
  std::unique_ptr<Tokenizer> tokenizer;
  std::unique_ptr<ValidityCache> validity;
  std::unique_ptr<LanguageModel> lm;
  std::unique_ptr<ByteSampler> sampler;

  static ModelBundle open(const std::string& tok_path, const std::string& lm_spec) {
    ModelBundle b;
    b.tokenizer = std::make_unique<Tokenizer>(Tokenizer::load(resolve_tokenizer_path(tok_path)));
    b.validity = std::make_unique<ValidityCache>(*b.tokenizer);
    b.lm = load_lm(lm_spec, b.tokenizer->vocab_size());
    b.sampler = std::make_unique<ByteSampler>(*b.lm, *b.tokenizer, *b.validity);
    return b;
  }
};

// Splits prompt text on registered special-token strings (explicit opt-in;
// plain encoding never matches specials in text).
std::vector<std::pair<std::string, std::optional<TokenId>>> split_specials(
    const Tokenizer& tok, const std::string& text, bool parse_specials) {
  std::vector<std::pair<std::string, std::optional<TokenId>>> segments;
  if (!parse_specials || tok.special_ids().empty()) {
    segments.emplace_back(text, std::nullopt);
    return segments;
  }
  std::vector<std::string> pats;
  std::vector<TokenId> ids;
  for (TokenId id : tok.special_ids()) {
    pats.push_back(tok.token_bytes(id));
    ids.push_back(id);
  }
  auto spans = match_added_tokens(pats, text);
  size_t pos = 0;
  for (const AddedSpan& s : spans) {
    segments.emplace_back(text.substr(pos, s.start - pos), ids[s.pattern]);
    pos = s.end;
  }
  segments.emplace_back(text.substr(pos), std::nullopt);
  return segments;
}

void print_token_line(std::ostream& os, const Tokenizer& tok, const TokenSequence& seq,
                      bool records) {
  if (records) {
    json rec;
    rec["type"] = "tokens";
    rec["ids"] = seq;
    std::vector<std::string> pieces;
    for (TokenId t : seq) pieces.push_back(tok.token_bytes(t));
    rec["pieces"] = pieces;
    os << rec.dump() << "\n";
    return;
  }
  for (size_t i = 0; i < seq.size(); ++i) os << (i ? " " : "") << seq[i];
  os << "\n";
}

int cmd_tokenize(const std::string& tok_path, const PromptSource& src, bool stream, bool records,
                 bool parse_specials) {
  Tokenizer tok = Tokenizer::load(resolve_tokenizer_path(tok_path));
  std::string text = src.read();
  TokenSequence out;
  if (stream) {
    ValidityCache v(tok);
    Vct vct(tok, v);
    for (auto& [segment, special] : split_specials(tok, text, parse_specials)) {
      for (unsigned char b : segment) {
        TokenSequence em = vct.feed_byte(b);
        out.insert(out.end(), em.begin(), em.end());
      }
      if (special) {
        TokenSequence em = vct.feed_special(*special);
        out.insert(out.end(), em.begin(), em.end());
      }
    }
    TokenSequence em = vct.finish();
    out.insert(out.end(), em.begin(), em.end());
  } else {
    for (auto& [segment, special] : split_specials(tok, text, parse_specials)) {
      TokenSequence enc = tok.encode(segment);
      out.insert(out.end(), enc.begin(), enc.end());
      if (special) out.push_back(*special);
    }
  }
  print_token_line(std::cout, tok, out, records);
  return kExitOk;
}

int cmd_vct(const std::string& tok_path, const PromptSource& src, bool records) {
  Tokenizer tok = Tokenizer::load(resolve_tokenizer_path(tok_path));
  ValidityCache v(tok);
  Vct vct(tok, v);
  std::string text = src.read();
  for (unsigned char b : text) vct.feed_byte(b);
  auto st = vct.branch_stats();
  size_t leaf_bits = 0;
  auto groups = vct.leaf_groups();
  for (auto& g : groups) leaf_bits += g.mask.count();
  if (records) {
    json rec;
    rec["type"] = "vct";
    rec["trunk"] = vct.trunk();
    rec["non_trunk_edges"] = st.non_trunk_edges;
    rec["live_hypotheses"] = st.live_hypotheses;
    rec["deepest_branch"] = st.deepest_branch;
    rec["leaf_groups"] = groups.size();
    rec["leaf_tokens"] = leaf_bits;
    std::cout << rec.dump() << "\n";
  } else {
    vct.dump(std::cout);
    std::cout << "leaf groups: " << groups.size() << ", leaf tokens: " << leaf_bits << "\n";
    std::cout << "stats: non_trunk_edges=" << st.non_trunk_edges
              << " live_hypotheses=" << st.live_hypotheses
              << " deepest_branch=" << st.deepest_branch << "\n";
  }
  return kExitOk;
}

int cmd_prefix_prob(const std::string& tok_path, const std::string& lm_spec,
                    const PromptSource& src, bool records) {
  ModelBundle b = ModelBundle::open(tok_path, lm_spec);
  std::string text = src.read();
  double lp = b.sampler->prefix_logprob(text);
  auto st = b.sampler->vct().branch_stats();
  if (records) {
    json rec;
    rec["type"] = "prefix_prob";
    rec["logprob"] = lp;
    rec["inference_calls"] = b.sampler->inference_calls();
    rec["trunk_len"] = b.sampler->vct().trunk().size();
    rec["non_trunk_edges"] = st.non_trunk_edges;
    std::cout << rec.dump() << "\n";
  } else {
    std::cout << "logprob " << lp << "\n";
    std::cout << "inference_calls " << b.sampler->inference_calls() << " (trunk "
              << b.sampler->vct().trunk().size() << " + branch nodes)\n";
  }
  return kExitOk;
}

struct SamplerArgs {
  std::string mode = "bytes";
  size_t n = 32;
  uint64_t seed = 0;
  double temperature = 1.0;
  std::optional<size_t> top_k;
  std::optional<double> top_p;
  std::string transform_level = "byte";
  bool specials_as_events = false;

  SamplerConfig config() const {
    SamplerConfig cfg;
    cfg.temperature = temperature;
    cfg.top_k = top_k;
    cfg.top_p = top_p;
    cfg.transform_level =
        transform_level == "token" ? TransformLevel::kToken : TransformLevel::kByte;
    cfg.seed = seed;
    cfg.specials_as_events = specials_as_events;
    return cfg;
  }
};

size_t draw_event(const std::vector<double>& lp, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double r = u(rng), acc = 0.0;
  size_t pick = ByteDistribution::kEot;
  for (size_t e = 0; e < lp.size(); ++e) {
    if (lp[e] == -std::numeric_limits<double>::infinity()) continue;
    pick = e;
    acc += std::exp(lp[e]);
    if (r <= acc) break;
  }
  return pick;
}

std::string to_hex(const std::string& s) {
  static const char* kHex = "0123456789abcdef";
  std::string out;
  out.reserve(s.size() * 2);
  for (unsigned char c : s) {
    out.push_back(kHex[c >> 4]);
    out.push_back(kHex[c & 15]);
  }
  return out;
}

int cmd_sample(const std::string& tok_path, const std::string& lm_spec, const PromptSource& src,
               const SamplerArgs& args, const std::vector<std::string>& ensemble,
               const std::vector<std::string>& proxy, bool records) {
  std::string text = src.read();
  SamplerConfig cfg = args.config();
  cfg.validate();
  std::mt19937_64 rng(args.seed);

  auto open_member = [&](const std::string& spec) {
    auto eq = spec.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error("member spec must be TOKENIZER.json=LMSPEC, got: " + spec);
    }
    return ModelBundle::open(spec.substr(0, eq), spec.substr(eq + 1));
  };
  auto emit = [&](const char* mode, const std::string& out) {
    if (records) {
      json rec{{"type", "sample"}, {"mode", mode}, {"text", out}, {"hex", to_hex(out)}};
      std::cout << rec.dump(-1, ' ', false, json::error_handler_t::replace) << "\n";
    } else {
      std::cout << out << "\n";
    }
    return kExitOk;
  };

  if (!proxy.empty()) {
    ModelBundle base = open_member(proxy[0]);
    ModelBundle expert = open_member(proxy[1]);
    ModelBundle anti = open_member(proxy[2]);
    auto feed = [&](uint8_t b) {
      base.sampler->vct().feed_byte(b);
      expert.sampler->vct().feed_byte(b);
      anti.sampler->vct().feed_byte(b);
    };
    for (unsigned char b : text) feed(b);
    std::string out;
    while (out.size() < args.n) {
      ByteDistribution d = proxy_next_byte(*base.sampler, *expert.sampler, *anti.sampler);
      size_t pick = draw_event(apply_transform(cfg, d.normalized()), rng);
      if (pick >= 256) break;
      out.push_back(static_cast<char>(pick));
      feed(static_cast<uint8_t>(pick));
    }
    return emit("proxy", out);
  }

  if (!ensemble.empty()) {
    std::vector<ModelBundle> bundles;
    std::vector<double> weights;
    for (const std::string& spec : ensemble) {
      std::string body = spec;
      double weight = 1.0;
      auto at = spec.rfind('@');
      if (at != std::string::npos && at > spec.find('=')) {
        weight = std::stod(spec.substr(at + 1));
        body = spec.substr(0, at);
      }
      bundles.push_back(open_member(body));
      weights.push_back(weight);
    }
    for (unsigned char b : text) {
      for (auto& bun : bundles) bun.sampler->vct().feed_byte(b);
    }
    std::string out;
    while (out.size() < args.n) {
      std::vector<CompositeMember> ms;
      for (size_t m = 0; m < bundles.size(); ++m) {
        ms.push_back({bundles[m].sampler.get(), weights[m]});
      }
      ByteDistribution d = ensemble_next_byte(ms);
      size_t pick = draw_event(apply_transform(cfg, d.normalized()), rng);
      if (pick >= 256) break;
      out.push_back(static_cast<char>(pick));
      for (auto& bun : bundles) bun.sampler->vct().feed_byte(static_cast<uint8_t>(pick));
    }
    return emit("ensemble", out);
  }

  ModelBundle b = ModelBundle::open(tok_path, lm_spec);
  b.sampler->feed_prompt(text);
  if (args.mode == "pbp") {
    TokenSequence seq = b.sampler->sample_completion(cfg, rng);
    if (records) {
      std::string text = b.tokenizer->decode(seq);
      json rec{{"type", "sample"}, {"mode", "pbp"}, {"ids", seq}, {"text", text},
               {"hex", to_hex(text)}};
      std::cout << rec.dump(-1, ' ', false, json::error_handler_t::replace) << "\n";
      return kExitOk;
    }
    std::cout << b.tokenizer->decode(seq) << "\n";
    return kExitOk;
  }
  if (args.mode == "bytes") {
    return emit("bytes", b.sampler->sample_bytes(args.n, cfg, rng));
  }
  throw std::runtime_error("unknown sample mode: " + args.mode);
}

int cmd_verify(double scale, uint64_t seed, size_t jobs, const std::string& inject,
               bool records) {
  verify::SuiteOptions opt;
  opt.scale = scale;
  opt.seed = seed;
  opt.jobs = jobs;
  opt.inject_pair_fault = (inject == "pair");
  auto results = verify::run_all(opt);
  bool ok = true;
  for (const auto& r : results) {
    ok = ok && r.ok();
    if (records) {
      json rec{{"type", "verify"},
               {"suite", r.name},
               {"cases", r.cases},
               {"failures", r.failures},
               {"seconds", r.seconds}};
      if (!r.first_failure.empty()) rec["first_failure"] = r.first_failure;
      std::cout << rec.dump() << "\n";
    } else {
      std::printf("%-20s %6zu cases  %6zu failures  %.2fs  %s\n", r.name.c_str(), r.cases,
                  r.failures, r.seconds, r.first_failure.c_str());
    }
  }
  return ok ? kExitOk : kExitVerifyFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"byte-level conditioning over BPE language models"};
  app.require_subcommand(1);

  std::string tok_path, lm_spec = "uniform";
  bool records = false, stream = false, parse_specials = false;
  PromptSource src;

  auto* tokenize = app.add_subcommand("tokenize", "encode text (batch or streaming)");
  tokenize->add_option("--tokenizer", tok_path, "tokenizer definition file")->required();
  tokenize->add_flag("--stream", stream, "feed bytes incrementally, print trunk emissions");
  tokenize->add_flag("--records", records, "newline-delimited JSON output");
  tokenize->add_flag("--parse-specials", parse_specials,
                     "split the prompt on registered special token strings");
  src.attach(tokenize);

  auto* vct = app.add_subcommand("vct", "build and dump the covering tree for a prompt");
  vct->add_option("--tokenizer", tok_path, "tokenizer definition file")->required();
  vct->add_flag("--records", records, "newline-delimited JSON output");
  src.attach(vct);

  auto* prob = app.add_subcommand("prefix-prob", "exact byte-prefix log probability");
  prob->add_option("--tokenizer", tok_path, "tokenizer definition file")->required();
  prob->add_option("--lm", lm_spec, "uniform | tabular:PATH | replay:PATH");
  prob->add_flag("--records", records, "newline-delimited JSON output");
  src.attach(prob);

  SamplerArgs sargs;
  std::vector<std::string> ensemble, proxy;
  auto* sample = app.add_subcommand("sample", "sample a completion or a byte stream");
  sample->add_option("--tokenizer", tok_path, "tokenizer definition file");
  sample->add_option("--lm", lm_spec, "uniform | tabular:PATH | replay:PATH");
  sample->add_option("--mode", sargs.mode, "pbp | bytes");
  sample->add_option("-n,--max-bytes", sargs.n, "byte budget (bytes mode)");
  sample->add_option("--seed", sargs.seed, "sampling seed");
  sample->add_option("--temperature", sargs.temperature, "softmax temperature (0 = greedy)");
  sample->add_option("--top-k", sargs.top_k, "keep the k most likely events");
  sample->add_option("--top-p", sargs.top_p, "nucleus truncation threshold");
  sample->add_option("--transform-level", sargs.transform_level, "byte | token");
  sample->add_flag("--specials-as-events", sargs.specials_as_events,
                   "expose boundary special tokens as sampling events");
  sample->add_option("--ensemble", ensemble,
                     "ensemble member TOKENIZER.json=LMSPEC[@WEIGHT] (repeatable)");
  sample
      ->add_option("--proxy", proxy,
                   "proxy members: base expert anti (TOKENIZER.json=LMSPEC each)")
      ->expected(3);
  sample->add_flag("--records", records, "newline-delimited JSON output");
  src.attach(sample);

  double scale = 1.0;
  uint64_t vseed = 0;
  size_t jobs = 1;
  std::string inject;
  auto* verify_cmd = app.add_subcommand("verify", "run the randomized differential suites");
  verify_cmd->add_option("--scale", scale, "case-count multiplier (0 = no-op pass)");
  verify_cmd->add_option("--seed", vseed, "suite seed");
  verify_cmd->add_option("--jobs", jobs, "parallel workers");
  verify_cmd->add_option("--inject-fault", inject,
                         "test-only fault hook (pair): suites must then fail");
  verify_cmd->add_flag("--records", records, "newline-delimited JSON output");

  CLI11_PARSE(app, argc, argv);

  try {
    if (tokenize->parsed()) {
      return cmd_tokenize(tok_path, src, stream, records, parse_specials);
    }
    if (vct->parsed()) return cmd_vct(tok_path, src, records);
    if (prob->parsed()) return cmd_prefix_prob(tok_path, lm_spec, src, records);
    if (sample->parsed()) {
      return cmd_sample(tok_path, lm_spec, src, sargs, ensemble, proxy, records);
    }
    if (verify_cmd->parsed()) return cmd_verify(scale, vseed, jobs, inject, records);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
