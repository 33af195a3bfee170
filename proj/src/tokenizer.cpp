#include "bytelm/tokenizer.hpp"

#include <algorithm>
#include <fstream>
#include <queue>
#include <sstream>

#include <nlohmann/json.hpp>

#include "bytelm/unicode.hpp"

namespace bytelm {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// ByteLevel byte <-> unit mapping
// ---------------------------------------------------------------------------

namespace {

struct ByteUnitTables {
  uint32_t to_unit[256];
  std::unordered_map<uint32_t, uint8_t> to_byte;

  ByteUnitTables() {
    int n = 0;
    for (int b = 0; b < 256; ++b) {
      bool printable = (b >= 33 && b <= 126) || (b >= 161 && b <= 172) || (b >= 174 && b <= 255);
      uint32_t cp = printable ? static_cast<uint32_t>(b) : static_cast<uint32_t>(256 + n++);
      to_unit[b] = cp;
      to_byte.emplace(cp, static_cast<uint8_t>(b));
    }
  }
};

const ByteUnitTables& byte_unit_tables() {
  static const ByteUnitTables t;
  return t;
}

uint64_t pair_key(TokenId l, TokenId r) {
  return (static_cast<uint64_t>(static_cast<uint32_t>(l)) << 32) | static_cast<uint32_t>(r);
}

}  // namespace

uint32_t byte_to_unit(uint8_t b) { return byte_unit_tables().to_unit[b]; }

std::optional<uint8_t> unit_to_byte(uint32_t cp) {
  const auto& t = byte_unit_tables().to_byte;
  auto it = t.find(cp);
  if (it == t.end()) return std::nullopt;
  return it->second;
}

std::string bytes_to_units(std::string_view bytes) {
  std::string out;
  out.reserve(bytes.size() * 2);
  for (unsigned char b : bytes) append_utf8(out, byte_to_unit(b));
  return out;
}

std::optional<std::string> units_to_bytes(std::string_view units) {
  std::string out;
  out.reserve(units.size());
  size_t pos = 0;
  while (pos < units.size()) {
    DecodedChar d = decode_utf8(units, pos);
    if (d.len == 0 || is_invalid_byte_cp(d.cp)) return std::nullopt;
    auto b = unit_to_byte(d.cp);
    if (!b) return std::nullopt;
    out.push_back(static_cast<char>(*b));
    pos += d.len;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Heap-priority merging (shared by encode and merge-list normalization)
// ---------------------------------------------------------------------------

namespace {

// Applies the lowest-rank available merge, leftmost first, until fixpoint.
// `find(l, r)` returns (rank, result) for a mergeable pair. If `used` is
// non-null, the rank of every applied merge is appended in application order.
template <typename Find>
TokenSequence heap_merge(TokenSequence symbols, const Find& find,
                         std::vector<uint32_t>* used = nullptr) {
  const size_t n = symbols.size();
  if (n < 2) return symbols;
  std::vector<int32_t> next(n), prev(n);
  std::vector<bool> alive(n, true);
  for (size_t i = 0; i < n; ++i) {
    next[i] = static_cast<int32_t>(i) + 1 < static_cast<int32_t>(n) ? static_cast<int32_t>(i) + 1
                                                                    : -1;
    prev[i] = static_cast<int32_t>(i) - 1;
  }
  struct Cand {
    uint32_t rank;
    uint32_t pos;
    TokenId l, r;
  };
  auto cmp = [](const Cand& a, const Cand& b) {
    if (a.rank != b.rank) return a.rank > b.rank;
    return a.pos > b.pos;
  };
  std::priority_queue<Cand, std::vector<Cand>, decltype(cmp)> heap(cmp);
  auto push_pair = [&](int32_t i) {
    if (i < 0) return;
    int32_t j = next[i];
    if (j < 0) return;
    if (auto m = find(symbols[i], symbols[j])) {
      heap.push({m->first, static_cast<uint32_t>(i), symbols[i], symbols[j]});
    }
  };
  for (size_t i = 0; i + 1 < n; ++i) push_pair(static_cast<int32_t>(i));
  while (!heap.empty()) {
    Cand c = heap.top();
    heap.pop();
    int32_t i = static_cast<int32_t>(c.pos);
    if (!alive[i] || symbols[i] != c.l) continue;
    int32_t j = next[i];
    if (j < 0 || symbols[j] != c.r) continue;
    auto m = find(c.l, c.r);
    if (!m || m->first != c.rank) continue;
    symbols[i] = m->second;
    alive[j] = false;
    next[i] = next[j];
    if (next[j] >= 0) prev[next[j]] = i;
    if (used) used->push_back(c.rank);
    push_pair(prev[i]);
    push_pair(i);
  }
  TokenSequence out;
  out.reserve(n);
  for (size_t i = 0; i < n; ++i) {
    if (alive[i]) out.push_back(symbols[i]);
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Tokenizer
// ---------------------------------------------------------------------------

const std::string& Tokenizer::token_bytes(TokenId id) const {
  if (id < 0 || static_cast<size_t>(id) >= vocab_.size()) {
    throw TokenizerError("token id out of range: " + std::to_string(id));
  }
  return vocab_[id];
}

std::optional<TokenId> Tokenizer::token_of_bytes(std::string_view bytes) const {
  auto it = vocab_index_.find(std::string(bytes));
  if (it == vocab_index_.end()) return std::nullopt;
  return it->second;
}

std::optional<TokenId> Tokenizer::special_of_string(std::string_view content) const {
  for (TokenId id : special_list_) {
    if (vocab_[id] == content) return id;
  }
  return std::nullopt;
}

std::optional<uint32_t> Tokenizer::merge_rank(TokenId left, TokenId right) const {
  auto it = pair_rank_.find(pair_key(left, right));
  if (it == pair_rank_.end()) return std::nullopt;
  return it->second;
}

std::optional<TokenId> Tokenizer::merge_result(TokenId left, TokenId right) const {
  auto r = merge_rank(left, right);
  if (!r) return std::nullopt;
  return merges_[*r].result;
}

std::optional<uint32_t> Tokenizer::forming_merge(TokenId id) const {
  if (id < 0 || static_cast<size_t>(id) >= forming_.size()) return std::nullopt;
  return forming_[id];
}

TokenSequence Tokenizer::encode_pretoken(std::string_view bytes) const {
  if (bytes.empty()) return {};
  if (ignore_merges_) {
    auto hit = token_of_bytes(bytes);
    if (hit && !is_special(*hit)) return {*hit};
  }
  TokenSequence symbols;
  symbols.reserve(bytes.size());
  for (char c : bytes) {
    auto id = token_of_bytes(std::string_view(&c, 1));
    if (!id) {
      throw TokenizerError("byte not in vocabulary alphabet");
    }
    symbols.push_back(*id);
  }
  auto find = [this](TokenId l, TokenId r) -> std::optional<std::pair<uint32_t, TokenId>> {
    auto it = pair_rank_.find(pair_key(l, r));
    if (it == pair_rank_.end()) return std::nullopt;
    return std::make_pair(it->second, merges_[it->second].result);
  };
  return heap_merge(std::move(symbols), find);
}

TokenSequence Tokenizer::encode(std::string_view text) const {
  TokenSequence out;
  if (text.empty()) return out;
  auto spans = match_added_tokens(added_patterns_, text);
  size_t pos = 0;
  auto encode_segment = [&](std::string_view seg) {
    for (std::string_view pt : pretokenize(rules_, seg)) {
      TokenSequence toks = encode_pretoken(pt);
      out.insert(out.end(), toks.begin(), toks.end());
    }
  };
  for (const AddedSpan& s : spans) {
    if (s.start > pos) encode_segment(text.substr(pos, s.start - pos));
    out.push_back(added_pattern_ids_[s.pattern]);
    pos = s.end;
  }
  if (pos < text.size()) encode_segment(text.substr(pos));
  return out;
}

std::string Tokenizer::decode(const TokenSequence& seq) const {
  std::string out;
  for (TokenId id : seq) {
    if (id < 0 || static_cast<size_t>(id) >= vocab_.size()) {
      throw TokenizerError("decode: unknown token id " + std::to_string(id));
    }
    if (is_special(id)) continue;
    out += vocab_[id];
  }
  return out;
}

bool Tokenizer::is_standalone(TokenId id) const {
  if (id < 0 || static_cast<size_t>(id) >= standalone_.size()) return false;
  return standalone_[id];
}

// ---------------------------------------------------------------------------
// Merge-list normalization
// ---------------------------------------------------------------------------

void Tokenizer::normalize_merges(const std::vector<std::pair<TokenId, TokenId>>& raw) {
  raw_merges_ = raw;
  // Raw lookup: earliest raw position per pair.
  std::unordered_map<uint64_t, uint32_t> raw_rank;
  for (size_t i = 0; i < raw.size(); ++i) {
    raw_rank.emplace(pair_key(raw[i].first, raw[i].second), static_cast<uint32_t>(i));
  }
  std::vector<TokenId> raw_result(raw.size());
  for (size_t i = 0; i < raw.size(); ++i) {
    const std::string& lb = vocab_[raw[i].first];
    const std::string& rb = vocab_[raw[i].second];
    auto res = token_of_bytes(lb + rb);
    if (!res) {
      throw TokenizerError("malformed merge: result of pair not in vocabulary");
    }
    raw_result[i] = *res;
  }
  auto raw_find = [&](TokenId l, TokenId r) -> std::optional<std::pair<uint32_t, TokenId>> {
    auto it = raw_rank.find(pair_key(l, r));
    if (it == raw_rank.end()) return std::nullopt;
    return std::make_pair(it->second, raw_result[it->second]);
  };

  // Step 1: per-token reachability under the raw heap semantics; the last
  // merge applied while re-deriving a reachable token is its forming merge.
  std::vector<int64_t> forming_raw(vocab_.size(), -1);
  unreachable_.clear();
  for (TokenId id = 0; static_cast<size_t>(id) < vocab_.size(); ++id) {
    const std::string& bytes = vocab_[id];
    if (is_special(id) || added_ids_.count(id)) continue;
    if (bytes.size() <= 1) continue;  // base tokens
    TokenSequence symbols;
    bool ok = true;
    for (char c : bytes) {
      auto b = token_of_bytes(std::string_view(&c, 1));
      if (!b) {
        ok = false;
        break;
      }
      symbols.push_back(*b);
    }
    if (!ok) {
      unreachable_.insert(id);
      continue;
    }
    std::vector<uint32_t> used;
    TokenSequence derived = heap_merge(std::move(symbols), raw_find, &used);
    if (derived.size() == 1 && derived[0] == id && !used.empty()) {
      forming_raw[id] = used.back();
    } else {
      unreachable_.insert(id);
    }
  }

  // Keep only forming merges of reachable tokens whose inputs are reachable.
  struct Item {
    TokenId l, r, res;
    uint32_t orig;
    bool moved = false;
  };
  std::vector<Item> items;
  auto reachable_input = [&](TokenId t) {
    if (is_special(t) || added_ids_.count(t)) return false;
    if (vocab_[t].size() <= 1) return true;
    return !unreachable_.count(t);
  };
  for (size_t i = 0; i < raw.size(); ++i) {
    TokenId res = raw_result[i];
    if (forming_raw[res] != static_cast<int64_t>(i)) continue;  // duplicate or unreachable
    if (!reachable_input(raw[i].first) || !reachable_input(raw[i].second)) continue;
    items.push_back({raw[i].first, raw[i].second, res, static_cast<uint32_t>(i)});
  }

  // Step 2: relocate merges that appear before the forming merges of their
  // inputs to immediately after the later of the two.
  auto position_of_forming = [&](const std::vector<Item>& list, TokenId t) -> int64_t {
    if (vocab_[t].size() <= 1) return -1;
    for (size_t i = 0; i < list.size(); ++i) {
      if (list[i].res == t) return static_cast<int64_t>(i);
    }
    return -1;
  };
  bool changed = true;
  while (changed) {
    changed = false;
    for (size_t i = 0; i < items.size(); ++i) {
      int64_t need = std::max(position_of_forming(items, items[i].l),
                              position_of_forming(items, items[i].r));
      if (need <= static_cast<int64_t>(i)) continue;
      Item item = items[i];
      item.moved = true;
      items.erase(items.begin() + i);
      // The anchor shifted left by one when `i` was erased, so the slot
      // immediately after it is `need` itself.
      size_t insert_pos = static_cast<size_t>(need);
      while (insert_pos < items.size() && items[insert_pos].moved &&
             items[insert_pos].orig < item.orig) {
        ++insert_pos;
      }
      items.insert(items.begin() + insert_pos, item);
      changed = true;
      break;
    }
  }

  merges_.clear();
  pair_rank_.clear();
  forming_.assign(vocab_.size(), std::nullopt);
  for (size_t i = 0; i < items.size(); ++i) {
    MergeRule m{items[i].l, items[i].r, items[i].res, static_cast<uint32_t>(i)};
    merges_.push_back(m);
    pair_rank_.emplace(pair_key(m.left, m.right), static_cast<uint32_t>(i));
    forming_[m.result] = static_cast<uint32_t>(i);
  }
}

void Tokenizer::finalize() {
  // Merge-tree depth per token.
  std::vector<int32_t> depth(vocab_.size(), -1);
  std::vector<TokenId> order(vocab_.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<TokenId>(i);
  std::sort(order.begin(), order.end(), [this](TokenId a, TokenId b) {
    return vocab_[a].size() < vocab_[b].size();
  });
  max_depth_ = 0;
  for (TokenId id : order) {
    if (auto f = forming_[id]) {
      const MergeRule& m = merges_[*f];
      int32_t dl = depth[m.left] < 0 ? 0 : depth[m.left];
      int32_t dr = depth[m.right] < 0 ? 0 : depth[m.right];
      depth[id] = std::max(dl, dr) + 1;
      max_depth_ = std::max<uint32_t>(max_depth_, static_cast<uint32_t>(depth[id]));
    } else {
      depth[id] = 0;
    }
  }

  max_token_len_ = 0;
  sorted_tokens_.clear();
  for (TokenId id = 0; static_cast<size_t>(id) < vocab_.size(); ++id) {
    if (is_special(id) || vocab_[id].empty()) continue;
    max_token_len_ = std::max(max_token_len_, vocab_[id].size());
    sorted_tokens_.push_back(id);
  }
  std::sort(sorted_tokens_.begin(), sorted_tokens_.end(),
            [this](TokenId a, TokenId b) { return vocab_[a] < vocab_[b]; });

  standalone_.assign(vocab_.size(), false);
  for (TokenId id = 0; static_cast<size_t>(id) < vocab_.size(); ++id) {
    if (is_special(id) || vocab_[id].empty()) continue;
    TokenSequence enc = encode(vocab_[id]);
    standalone_[id] = (enc.size() == 1 && enc[0] == id);
  }
}

// ---------------------------------------------------------------------------
// Construction
// ---------------------------------------------------------------------------

Tokenizer Tokenizer::from_parts(std::vector<std::string> vocab,
                                std::vector<std::pair<TokenId, TokenId>> merges, RuleSet rules,
                                bool ignore_merges) {
  Tokenizer t;
  t.vocab_ = std::move(vocab);
  for (TokenId i = 0; static_cast<size_t>(i) < t.vocab_.size(); ++i) {
    if (t.vocab_[i].empty()) continue;
    auto [it, inserted] = t.vocab_index_.emplace(t.vocab_[i], i);
    if (!inserted) throw TokenizerError("duplicate vocabulary entry");
  }
  t.rules_ = rules;
  t.ignore_merges_ = ignore_merges;
  for (auto [l, r] : merges) {
    if (l < 0 || r < 0 || static_cast<size_t>(l) >= t.vocab_.size() ||
        static_cast<size_t>(r) >= t.vocab_.size()) {
      throw TokenizerError("merge references token outside vocabulary");
    }
  }
  t.normalize_merges(merges);
  t.finalize();
  return t;
}

namespace {

// Maps a known Split regex onto the rule classes. The supported family is
// pinned to the patterns shipped by GPT-2-, OLMo-2/cl100k- and Llama-3-style
// tokenizer files.
std::optional<RuleSet> rules_from_regex(const std::string& re) {
  static const std::string kGpt2 =
      "'s|'t|'re|'ve|'m|'ll|'d| ?\\p{L}+| ?\\p{N}+| ?[^\\s\\p{L}\\p{N}]+|\\s+(?!\\S)|\\s+";
  static const std::string kCl100k =
      "(?i:'s|'t|'re|'ve|'m|'ll|'d)|[^\\r\\n\\p{L}\\p{N}]?\\p{L}+|\\p{N}{1,3}| "
      "?[^\\s\\p{L}\\p{N}]+[\\r\\n]*|\\s*[\\r\\n]+|\\s+(?!\\S)|\\s+";
  static const std::string kCl100kUpper =
      "(?i:'s|'t|'re|'ve|'m|'ll|'d)|[^\\r\\n\\p{L}\\p{N}]?\\p{L}+|\\p{N}{1,3}| "
      "?[^\\s\\p{L}\\p{N}]+[\\r\\n]*|\\s*[\\r\\n]+|\\s+(?!\\S)|\\s+";
  if (re == kGpt2) return RuleSet::gpt2();
  if (re == kCl100k || re == kCl100kUpper) return RuleSet::cl100k();
  // Right-aligned digit grouping variant of the cl100k family.
  static const std::string kRightDigits =
      "(?i:'s|'t|'re|'ve|'m|'ll|'d)|[^\\r\\n\\p{L}\\p{N}]?\\p{L}+|\\p{N}{1,3}(?=(?:\\p{N}{3})*(?!"
      "\\p{N}))| ?[^\\s\\p{L}\\p{N}]+[\\r\\n]*|\\s*[\\r\\n]+|\\s+(?!\\S)|\\s+";
  if (re == kRightDigits) {
    RuleSet r = RuleSet::cl100k();
    r.digits = DigitStyle::kGroupRight;
    return r;
  }
  return std::nullopt;
}

RuleSet rules_from_pretokenizer_json(const json& pt, bool* saw_byte_level) {
  if (pt.is_null()) return RuleSet::none();
  const std::string type = pt.value("type", "");
  if (type == "ByteLevel") {
    if (pt.value("add_prefix_space", false)) {
      throw TokenizerError("unsupported pretokenizer: ByteLevel add_prefix_space");
    }
    *saw_byte_level = true;
    if (pt.value("use_regex", true)) return RuleSet::gpt2();
    return RuleSet::none();
  }
  if (type == "Split") {
    if (pt.value("invert", false)) throw TokenizerError("unsupported pretokenizer: Split invert");
    const std::string behavior = pt.value("behavior", "Isolated");
    if (behavior != "Isolated") {
      throw TokenizerError("unsupported pretokenizer: Split behavior " + behavior);
    }
    if (!pt.contains("pattern") || !pt["pattern"].contains("Regex")) {
      throw TokenizerError("unsupported pretokenizer: Split without a Regex pattern");
    }
    auto rules = rules_from_regex(pt["pattern"]["Regex"].get<std::string>());
    if (!rules) {
      throw TokenizerError("unsupported pretokenizer: unrecognized Split regex");
    }
    return *rules;
  }
  if (type == "Sequence") {
    std::optional<RuleSet> split_rules;
    bool byte_level = false;
    for (const json& sub : pt.at("pretokenizers")) {
      bool sub_bl = false;
      RuleSet r = rules_from_pretokenizer_json(sub, &sub_bl);
      if (sub_bl) {
        byte_level = true;
        if (r.split && split_rules) {
          throw TokenizerError("unsupported pretokenizer: multiple splitting stages");
        }
        if (r.split && !split_rules) split_rules = r;
        continue;
      }
      if (split_rules) {
        throw TokenizerError("unsupported pretokenizer: multiple splitting stages");
      }
      split_rules = r;
    }
    if (!byte_level) {
      throw TokenizerError("unsupported pretokenizer: Sequence without ByteLevel");
    }
    *saw_byte_level = true;
    return split_rules ? *split_rules : RuleSet::none();
  }
  throw TokenizerError("unsupported pretokenizer type: " + type);
}

}  // namespace

Tokenizer Tokenizer::from_json_text(std::string_view json_text) {
  json doc = json::parse(json_text);
  Tokenizer t;

  if (!doc.contains("model")) throw TokenizerError("tokenizer definition has no model section");
  const json& model = doc["model"];
  const std::string model_type = model.value("type", "");
  if (model_type != "BPE") {
    throw TokenizerError("unsupported model type: " + (model_type.empty() ? "?" : model_type));
  }
  if (model.value("byte_fallback", false)) {
    throw TokenizerError("unsupported model option: byte_fallback");
  }
  t.ignore_merges_ = model.value("ignore_merges", false);

  if (doc.contains("normalizer") && !doc["normalizer"].is_null()) {
    throw TokenizerError("unsupported normalizer (only null is accepted)");
  }

  // Vocabulary: unit strings -> byte strings.
  const json& vocab = model.at("vocab");
  TokenId max_id = -1;
  for (auto it = vocab.begin(); it != vocab.end(); ++it) {
    max_id = std::max<TokenId>(max_id, it.value().get<TokenId>());
  }
  if (doc.contains("added_tokens")) {
    for (const json& a : doc["added_tokens"]) {
      max_id = std::max<TokenId>(max_id, a.at("id").get<TokenId>());
    }
  }
  t.vocab_.assign(static_cast<size_t>(max_id) + 1, std::string());
  for (auto it = vocab.begin(); it != vocab.end(); ++it) {
    auto bytes = units_to_bytes(it.key());
    if (!bytes) {
      throw TokenizerError("vocabulary entry is not a byte-level unit string: " + it.key());
    }
    TokenId id = it.value().get<TokenId>();
    if (!t.vocab_[id].empty()) throw TokenizerError("duplicate vocabulary id");
    t.vocab_[id] = *bytes;
  }

  // Added tokens (specials and plain added strings).
  if (doc.contains("added_tokens")) {
    for (const json& a : doc["added_tokens"]) {
      TokenId id = a.at("id").get<TokenId>();
      std::string content = a.at("content").get<std::string>();
      if (a.value("lstrip", false) || a.value("rstrip", false) || a.value("single_word", false)) {
        throw TokenizerError("unsupported added-token flags (lstrip/rstrip/single_word)");
      }
      t.vocab_[id] = content;
      if (a.value("special", false)) {
        t.specials_.insert(id);
        t.special_list_.push_back(id);
      } else {
        t.added_ids_.insert(id);
        t.added_patterns_.push_back(content);
        t.added_pattern_ids_.push_back(id);
      }
    }
  }

  for (TokenId i = 0; static_cast<size_t>(i) < t.vocab_.size(); ++i) {
    if (t.vocab_[i].empty()) continue;
    auto [it2, inserted] = t.vocab_index_.emplace(t.vocab_[i], i);
    if (!inserted) throw TokenizerError("duplicate vocabulary entry");
  }

  // BOS / EOS detection from the special registry.
  for (TokenId id : t.special_list_) {
    const std::string& c = t.vocab_[id];
    if (!t.eos_ && (c == "<|endoftext|>" || c == "</s>" || c == "<|end_of_text|>" ||
                    c == "<eos>" || c == "<|eot_id|>")) {
      t.eos_ = id;
    }
    if (!t.bos_ && (c == "<s>" || c == "<|begin_of_text|>" || c == "<bos>" ||
                    c == "<|startoftext|>")) {
      t.bos_ = id;
    }
  }

  // Pretokenizer.
  bool saw_byte_level = false;
  RuleSet rules = RuleSet::none();
  if (doc.contains("pre_tokenizer")) {
    rules = rules_from_pretokenizer_json(doc["pre_tokenizer"], &saw_byte_level);
  }
  t.rules_ = rules;

  // Merges: ["l r", ...] or [["l", "r"], ...], in unit space.
  std::vector<std::pair<TokenId, TokenId>> raw;
  for (const json& m : model.at("merges")) {
    std::string lu, ru;
    if (m.is_string()) {
      const std::string s = m.get<std::string>();
      auto sp = s.find(' ');
      if (sp == std::string::npos) throw TokenizerError("malformed merge entry: " + s);
      lu = s.substr(0, sp);
      ru = s.substr(sp + 1);
    } else if (m.is_array() && m.size() == 2) {
      lu = m[0].get<std::string>();
      ru = m[1].get<std::string>();
    } else {
      throw TokenizerError("malformed merge entry");
    }
    auto lb = units_to_bytes(lu), rb = units_to_bytes(ru);
    if (!lb || !rb) throw TokenizerError("merge entry is not in unit space");
    auto li = t.vocab_index_.find(*lb);
    auto ri = t.vocab_index_.find(*rb);
    if (li == t.vocab_index_.end() || ri == t.vocab_index_.end()) {
      throw TokenizerError("merge references token absent from vocabulary");
    }
    raw.emplace_back(li->second, ri->second);
  }

  t.normalize_merges(raw);
  t.finalize();
  return t;
}

Tokenizer Tokenizer::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw TokenizerError("cannot open tokenizer file: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return from_json_text(ss.str());
}

}  // namespace bytelm
