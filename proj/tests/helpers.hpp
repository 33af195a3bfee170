#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "bytelm/tokenizer.hpp"

namespace bytelm::test {

#ifndef BYTELM_TEST_DATA_DIR
#define BYTELM_TEST_DATA_DIR "tests/data"
#endif

inline std::string data_path(const std::string& rel) {
  return std::string(BYTELM_TEST_DATA_DIR) + "/" + rel;
}

inline std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

inline std::vector<uint32_t> read_ids(const std::string& path) {
  std::string raw = read_file(path);
  if (raw.size() < 4) throw std::runtime_error("truncated ids file");
  uint32_t n = 0;
  std::memcpy(&n, raw.data(), 4);
  if (raw.size() != 4 + 4ull * n) throw std::runtime_error("bad ids file size");
  std::vector<uint32_t> ids(n);
  std::memcpy(ids.data(), raw.data() + 4, 4ull * n);
  return ids;
}

inline const Tokenizer& fixture_tokenizer(const std::string& name) {
  static std::unordered_map<std::string, Tokenizer> cache;
  auto it = cache.find(name);
  if (it == cache.end()) {
    it = cache.emplace(name, Tokenizer::load(data_path("tokenizers/" + name + ".json"))).first;
  }
  return it->second;
}

// Small fixed tokenizer: bytes a..h plus the given extra merges.
inline Tokenizer toy_tokenizer(std::vector<std::string> extra_vocab,
                               std::vector<std::pair<TokenId, TokenId>> merges,
                               RuleSet rules = RuleSet::none()) {
  std::vector<std::string> vocab;
  for (char c = 'a'; c <= 'h'; ++c) vocab.emplace_back(1, c);
  for (auto& v : extra_vocab) vocab.push_back(std::move(v));
  return Tokenizer::from_parts(std::move(vocab), std::move(merges), rules);
}

}  // namespace bytelm::test
