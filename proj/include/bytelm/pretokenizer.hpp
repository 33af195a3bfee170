#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace bytelm {

// Character class as seen by the split rules.
enum class CharClass : uint8_t { kSpace, kNewline, kOtherWs, kLetter, kDigit, kOther };

CharClass char_class(uint32_t cp);

enum class WordLead : uint8_t {
  kNone,            // \p{L}+
  kSpace,           // " ?\p{L}+"
  kNonAlnumNoCrlf,  // "[^\r\n\p{L}\p{N}]?\p{L}+"
};

enum class DigitStyle : uint8_t {
  kSpaceRun,    // " ?\p{N}+"
  kGroupLeft,   // "\p{N}{1,g}"
  kGroupRight,  // "\p{N}{1,g}" anchored so groups align to the run's end
  kSingle,      // "\p{N}"
};

// One pretokenizer behavior, expressed as the closed set of rule classes the
// streaming splitter knows how to run. The alternation order is fixed:
// contractions, word, digits, punctuation, newline run, whitespace with
// one-character hold-back, whitespace.
struct RuleSet {
  bool split = true;  // false: the whole text is a single pretoken
  bool contractions = false;
  bool contraction_fold_case = false;
  WordLead word_lead = WordLead::kSpace;
  DigitStyle digits = DigitStyle::kSpaceRun;
  uint32_t digit_group = 3;
  bool punct_newline_suffix = false;  // " ?[^\s\p{L}\p{N}]+[\r\n]*"
  bool newline_run = false;           // "\s*[\r\n]+" alternative present

  static RuleSet gpt2();
  static RuleSet cl100k();
  static RuleSet none();
};

// Suffixes accepted after an apostrophe by the contraction rule.
inline constexpr const char* kContractionSuffixes[] = {"s", "t", "re", "ve", "m", "ll", "d"};

// Batch pretokenization: returns the interior boundary offsets (each is the
// byte offset where a new pretoken starts; 0 and text.size() are implied).
std::vector<size_t> pretoken_boundaries(const RuleSet& rules, std::string_view text);
std::vector<std::string_view> pretokenize(const RuleSet& rules, std::string_view text);

// Leftmost-longest added-token matching over raw bytes (applied before
// pretokenization). Returns non-overlapping spans in order.
struct AddedSpan {
  size_t start = 0;
  size_t end = 0;
  int pattern = -1;
};
std::vector<AddedSpan> match_added_tokens(const std::vector<std::string>& patterns,
                                          std::string_view text);

// ---------------------------------------------------------------------------
// Streaming splitter
// ---------------------------------------------------------------------------

// Automaton state of one split hypothesis at the stream frontier.
struct Resume {
  enum class M : uint8_t {
    kBoundary,    // at a pretoken boundary, nothing consumed
    kNoSplit,     // rule set never splits
    kWord,        // inside \p{L}+ (lead already absorbed)
    kWordPoison,  // word run that is contradicted if the next scalar equals `a`
    kOther1,      // single non-ws non-alnum scalar consumed (flag: apostrophe)
    kAposNeed,    // apostrophe + first scalar of a two-scalar contraction; `a` = required scalar
    kPunct,       // inside the punctuation run (length >= 1 beyond any lead)
    kPunctNl,     // inside the trailing [\r\n]* of a punctuation run
    kDigits,      // digit run; `a` = scalars consumed in current group / run
    kDigitsRight, // right-aligned digit run; `a` = first group length, `b` = total consumed
    kPlainRun,    // ws run, no newline seen, no interior splits; `a` = length in scalars
    kNlWait,      // ws run claimed to end inside "\s*[\r\n]+"; flag: last scalar was \r\n
    kTailRun,     // plain-ws tail after a newline piece; `a` = length; dies on newline
    kWsLast,      // claims current ws scalar (`a` = cp) ends the run before a non-ws scalar
  };
  M m = M::kBoundary;
  uint32_t a = 0;
  uint32_t b = 0;
  bool flag = false;

  bool operator==(const Resume&) const = default;
};

// One live split hypothesis: a complete boundary assignment over the consumed
// bytes plus the frontier automaton state and added-token progress.
struct SplitHypo {
  std::vector<uint64_t> splits;      // absolute offsets where pretokens start
  std::vector<AddedSpan> added;      // committed added-token spans (absolute)
  Resume resume;
  int added_active = -1;             // pattern index currently being matched
  uint64_t added_start = 0;
  uint32_t added_progress = 0;
  // UTF-8 reassembly of the frontier scalar.
  std::string pending_bytes;

  bool same_state(const SplitHypo& o) const;
};

// Decision reported for the boundary immediately before the newest byte.
struct SplitDecision {
  enum class Kind : uint8_t { kNoSplit, kForcedSplit, kAmbiguous } kind = Kind::kNoSplit;
  size_t live_hypotheses = 1;
};

// Streaming pretokenizer + added-token matcher with explicit hypothesis
// branching. Bytes are pushed one at a time; every hypothesis carries the
// full boundary assignment it stands for. Feeding the whole stream and
// resolving at end-of-text always leaves exactly one survivor, whose
// assignment equals the batch pretokenization.
class StreamSplitter {
 public:
  explicit StreamSplitter(const RuleSet& rules, std::vector<std::string> added_patterns = {});

  // Scratch splitter resuming from a snapshot of live hypotheses (used for
  // lookahead simulation of candidate token bytes).
  StreamSplitter(const RuleSet& rules, std::vector<std::string> added_patterns,
                 std::vector<SplitHypo> hypos, uint64_t consumed, uint64_t added_frontier);

  SplitDecision advance(uint8_t byte);

  // Keeps only the hypotheses at the given indices (after a covering leaf
  // has been committed, contradicting lineages die).
  void retain(const std::vector<size_t>& indices);

  // Drops split and span records before `keep_from`; they are shared by all
  // live hypotheses once the tree trunk has passed them.
  void gc(uint64_t keep_from);

  // Resolves end-of-text: prunes hypotheses inconsistent with the stream
  // ending here. Returns the unique survivor.
  const SplitHypo& resolve_at_end();

  // Non-destructive end-of-text resolution (the stream may continue after).
  std::optional<SplitHypo> peek_resolve_at_end() const;

  const std::vector<SplitHypo>& hypotheses() const { return hypos_; }
  uint64_t consumed() const { return consumed_; }
  uint64_t added_frontier() const { return added_frontier_; }
  const RuleSet& rules() const { return rules_; }
  const std::vector<std::string>& added_patterns() const { return added_; }

  // Added-token matches visible at the current frontier: completed spans
  // ending here and in-progress partial matches (with their candidate end).
  struct AddedScan {
    std::vector<AddedSpan> full;
    std::vector<AddedSpan> partial;
  };
  AddedScan scan_added() const;

  // Step a single hypothesis by one byte without the added-token layer and
  // without spawning new added candidates (used for lookahead simulation of
  // candidate token bytes). Returns the successor set.
  static std::vector<SplitHypo> step_text(const RuleSet& rules, const SplitHypo& h,
                                          uint64_t offset, uint8_t byte);
  static bool eos_consistent(const RuleSet& rules, const SplitHypo& h);

 private:
  void dedup();

  RuleSet rules_;
  std::vector<std::string> added_;
  std::vector<SplitHypo> hypos_;
  uint64_t consumed_ = 0;
  uint64_t added_frontier_ = 0;  // added matches before this offset are final
};

}  // namespace bytelm
