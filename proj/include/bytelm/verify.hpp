#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "bytelm/lm.hpp"
#include "bytelm/oracle.hpp"
#include "bytelm/validity.hpp"

namespace bytelm::verify {

struct SuiteOptions {
  uint64_t seed = 0;
  double scale = 1.0;  // multiplies case counts; 0 is a no-op pass
  size_t jobs = 1;
  // Test-only fault hook: flips one pairwise-validity answer so the
  // differential suites must fail (sanity check of the harness itself).
  bool inject_pair_fault = false;
};

struct SuiteResult {
  std::string name;
  size_t cases = 0;
  size_t failures = 0;
  double seconds = 0.0;
  std::string first_failure;  // reproduction hint

  bool ok() const { return failures == 0; }
};

// Randomized differential suites over toy tokenizers and finite-horizon
// models. Every expected value comes from the oracle module.
SuiteResult run_pair_validity_suite(const SuiteOptions& opt);
SuiteResult run_covering_suite(const SuiteOptions& opt);
SuiteResult run_prefix_probability_suite(const SuiteOptions& opt);
SuiteResult run_chain_rule_suite(const SuiteOptions& opt);

std::vector<SuiteResult> run_all(const SuiteOptions& opt);

// Builds a TabularLM whose conditional rows place mass only on valid
// continuations of their context (plus end-of-sequence), so byte event
// distributions sum to one exactly.
TabularLM make_valid_supported_lm(uint64_t seed, const Tokenizer& tok, ValidityCache& validity,
                                  uint32_t horizon, size_t entries);

}  // namespace bytelm::verify
