#include "bytelm/pretokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <stdexcept>

#include "bytelm/unicode.hpp"

namespace bytelm {

CharClass char_class(uint32_t cp) {
  if (cp == ' ') return CharClass::kSpace;
  if (cp == '\r' || cp == '\n') return CharClass::kNewline;
  if (is_invalid_byte_cp(cp)) return CharClass::kOther;
  if (is_whitespace(cp)) return CharClass::kOtherWs;
  if (is_letter(cp)) return CharClass::kLetter;
  if (is_number(cp)) return CharClass::kDigit;
  return CharClass::kOther;
}

namespace {

bool is_ws_class(CharClass c) {
  return c == CharClass::kSpace || c == CharClass::kNewline || c == CharClass::kOtherWs;
}

// Simple case folding restricted to what can reach the contraction suffix
// letters: ASCII case plus U+017F (long s) -> 's'.
uint32_t fold_ascii(uint32_t cp) {
  if (cp == 0x17F) return 's';
  return (cp >= 'A' && cp <= 'Z') ? cp + 32 : cp;
}

// Can `cp` serve as the optional leading character of the word rule?
bool word_lead_ok(const RuleSet& r, uint32_t cp) {
  CharClass c = char_class(cp);
  switch (r.word_lead) {
    case WordLead::kNone:
      return false;
    case WordLead::kSpace:
      return cp == ' ';
    case WordLead::kNonAlnumNoCrlf:
      return c != CharClass::kNewline && c != CharClass::kLetter && c != CharClass::kDigit;
  }
  return false;
}

}  // namespace

RuleSet RuleSet::gpt2() {
  RuleSet r;
  r.split = true;
  r.contractions = true;
  r.contraction_fold_case = false;
  r.word_lead = WordLead::kSpace;
  r.digits = DigitStyle::kSpaceRun;
  r.punct_newline_suffix = false;
  r.newline_run = false;
  return r;
}

RuleSet RuleSet::cl100k() {
  RuleSet r;
  r.split = true;
  r.contractions = true;
  r.contraction_fold_case = true;
  r.word_lead = WordLead::kNonAlnumNoCrlf;
  r.digits = DigitStyle::kGroupLeft;
  r.digit_group = 3;
  r.punct_newline_suffix = true;
  r.newline_run = true;
  return r;
}

RuleSet RuleSet::none() {
  RuleSet r;
  r.split = false;
  return r;
}

// ---------------------------------------------------------------------------
// Batch matching
// ---------------------------------------------------------------------------

namespace {

struct CpCursor {
  std::string_view text;
  size_t pos;

  bool done() const { return pos >= text.size(); }
  DecodedChar peek() const { return decode_utf8(text, pos); }
};

// Length of the contraction alternative at pos, or 0.
size_t match_contraction(const RuleSet& r, std::string_view text, size_t pos) {
  if (!r.contractions || pos >= text.size() || text[pos] != '\'') return 0;
  for (const char* suf : kContractionSuffixes) {
    size_t n = std::char_traits<char>::length(suf);
    size_t p = pos + 1;
    bool ok = true;
    for (size_t i = 0; i < n; ++i) {
      if (p >= text.size()) {
        ok = false;
        break;
      }
      DecodedChar d = decode_utf8(text, p);
      uint32_t cp = r.contraction_fold_case ? fold_ascii(d.cp) : d.cp;
      if (cp != static_cast<uint32_t>(suf[i])) {
        ok = false;
        break;
      }
      p += d.len;
    }
    if (ok) return p - pos;
  }
  return 0;
}

size_t match_word(const RuleSet& r, std::string_view text, size_t pos) {
  size_t p = pos;
  DecodedChar d = decode_utf8(text, p);
  size_t lead = 0;
  if (word_lead_ok(r, d.cp)) lead = d.len;
  // Try with the lead consumed first (regex greedy on the optional atom).
  for (int attempt = 0; attempt < 2; ++attempt) {
    size_t q = pos + (attempt == 0 ? lead : 0);
    size_t letters = 0;
    while (q < text.size()) {
      DecodedChar e = decode_utf8(text, q);
      if (char_class(e.cp) != CharClass::kLetter) break;
      q += e.len;
      ++letters;
    }
    if (letters > 0) return q - pos;
    if (lead == 0) break;
  }
  return 0;
}

size_t match_digits(const RuleSet& r, std::string_view text, size_t pos) {
  size_t p = pos;
  size_t lead = 0;
  if (r.digits == DigitStyle::kSpaceRun && p < text.size() && text[p] == ' ') lead = 1;
  size_t q = pos + lead;
  size_t run_start = q;
  size_t count = 0;
  while (q < text.size()) {
    DecodedChar e = decode_utf8(text, q);
    if (char_class(e.cp) != CharClass::kDigit) break;
    q += e.len;
    ++count;
  }
  if (count == 0) return 0;
  switch (r.digits) {
    case DigitStyle::kSpaceRun:
      return q - pos;
    case DigitStyle::kSingle: {
      DecodedChar e = decode_utf8(text, run_start);
      return e.len;
    }
    case DigitStyle::kGroupLeft: {
      size_t take = std::min<size_t>(count, r.digit_group);
      size_t qq = run_start;
      for (size_t i = 0; i < take; ++i) qq += decode_utf8(text, qq).len;
      return qq - pos;
    }
    case DigitStyle::kGroupRight: {
      size_t take = ((count - 1) % r.digit_group) + 1;
      size_t qq = run_start;
      for (size_t i = 0; i < take; ++i) qq += decode_utf8(text, qq).len;
      return qq - pos;
    }
  }
  return 0;
}

size_t match_punct(const RuleSet& r, std::string_view text, size_t pos) {
  size_t p = pos;
  if (p + 1 < text.size() && text[p] == ' ') {
    // optional leading space, must still be followed by a punct scalar
    DecodedChar e = decode_utf8(text, p + 1);
    if (char_class(e.cp) == CharClass::kOther) p += 1;
  }
  size_t run = 0;
  while (p < text.size()) {
    DecodedChar e = decode_utf8(text, p);
    if (char_class(e.cp) != CharClass::kOther) break;
    p += e.len;
    ++run;
  }
  if (run == 0) return 0;
  if (r.punct_newline_suffix) {
    while (p < text.size()) {
      DecodedChar e = decode_utf8(text, p);
      if (char_class(e.cp) != CharClass::kNewline) break;
      p += e.len;
    }
  }
  return p - pos;
}

// "\s*[\r\n]+": longest whitespace prefix ending at its last \r or \n.
size_t match_newline_run(const RuleSet& r, std::string_view text, size_t pos) {
  if (!r.newline_run) return 0;
  size_t p = pos;
  size_t last_nl_end = 0;
  while (p < text.size()) {
    DecodedChar e = decode_utf8(text, p);
    CharClass c = char_class(e.cp);
    if (!is_ws_class(c)) break;
    p += e.len;
    if (c == CharClass::kNewline) last_nl_end = p - pos;
  }
  return last_nl_end;
}

// "\s+(?!\S)": maximal run if at end of text, else run minus one scalar.
size_t match_ws_holdback(std::string_view text, size_t pos) {
  size_t p = pos;
  size_t last_start = pos;
  size_t count = 0;
  while (p < text.size()) {
    DecodedChar e = decode_utf8(text, p);
    if (!is_ws_class(char_class(e.cp))) break;
    last_start = p;
    p += e.len;
    ++count;
  }
  if (count == 0) return 0;
  if (p >= text.size()) return p - pos;
  if (count >= 2) return last_start - pos;
  return 0;
}

size_t match_ws(std::string_view text, size_t pos) {
  size_t p = pos;
  while (p < text.size()) {
    DecodedChar e = decode_utf8(text, p);
    if (!is_ws_class(char_class(e.cp))) break;
    p += e.len;
  }
  return p - pos;
}

}  // namespace

std::vector<size_t> pretoken_boundaries(const RuleSet& rules, std::string_view text) {
  std::vector<size_t> bounds;
  if (!rules.split || text.empty()) return bounds;
  size_t pos = 0;
  while (pos < text.size()) {
    size_t len = match_contraction(rules, text, pos);
    if (len == 0) len = match_word(rules, text, pos);
    if (len == 0) len = match_digits(rules, text, pos);
    if (len == 0) len = match_punct(rules, text, pos);
    if (len == 0) len = match_newline_run(rules, text, pos);
    if (len == 0) len = match_ws_holdback(text, pos);
    if (len == 0) len = match_ws(text, pos);
    if (len == 0) throw std::logic_error("pretokenizer: no rule matched");
    pos += len;
    if (pos < text.size()) bounds.push_back(pos);
  }
  return bounds;
}

std::vector<std::string_view> pretokenize(const RuleSet& rules, std::string_view text) {
  std::vector<std::string_view> out;
  if (text.empty()) return out;
  auto bounds = pretoken_boundaries(rules, text);
  size_t prev = 0;
  for (size_t b : bounds) {
    out.push_back(text.substr(prev, b - prev));
    prev = b;
  }
  out.push_back(text.substr(prev));
  return out;
}

std::vector<AddedSpan> match_added_tokens(const std::vector<std::string>& patterns,
                                          std::string_view text) {
  std::vector<AddedSpan> spans;
  if (patterns.empty()) return spans;
  size_t pos = 0;
  while (pos < text.size()) {
    int best = -1;
    size_t best_len = 0;
    for (size_t i = 0; i < patterns.size(); ++i) {
      const std::string& p = patterns[i];
      if (p.empty() || p.size() < best_len) continue;
      if (text.compare(pos, p.size(), p) == 0 && p.size() > best_len) {
        best = static_cast<int>(i);
        best_len = p.size();
      }
    }
    if (best >= 0) {
      spans.push_back({pos, pos + best_len, best});
      pos += best_len;
    } else {
      ++pos;
    }
  }
  return spans;
}

// ---------------------------------------------------------------------------
// Streaming splitter
// ---------------------------------------------------------------------------

namespace {

using M = Resume::M;

// Appends a successor with an extra split recorded at `off`.
SplitHypo with_split(const SplitHypo& h, uint64_t off, Resume r) {
  SplitHypo n = h;
  n.splits.push_back(off);
  n.resume = r;
  return n;
}

SplitHypo with_resume(const SplitHypo& h, Resume r) {
  SplitHypo n = h;
  n.resume = r;
  return n;
}

std::vector<Resume> digit_entry(const RuleSet& R) {
  switch (R.digits) {
    case DigitStyle::kSpaceRun:
      return {Resume{M::kDigits, 1}};
    case DigitStyle::kGroupLeft:
      if (R.digit_group <= 1) return {Resume{M::kBoundary}};
      return {Resume{M::kDigits, 1}};
    case DigitStyle::kSingle:
      return {Resume{M::kBoundary}};
    case DigitStyle::kGroupRight: {
      std::vector<Resume> out;
      for (uint32_t f = 1; f <= R.digit_group; ++f) out.push_back(Resume{M::kDigitsRight, f, 1});
      return out;
    }
  }
  return {};
}

void dispatch_fresh(const RuleSet& R, const SplitHypo& h, uint64_t off, uint32_t cp,
                    std::vector<SplitHypo>& out);

// The last whitespace scalar `w` of a run meets non-ws scalar `cp` at `off`.
void junction_join(const RuleSet& R, const SplitHypo& h, uint64_t off, uint32_t w, uint32_t cp,
                   std::vector<SplitHypo>& out) {
  CharClass c = char_class(cp);
  if (c == CharClass::kLetter) {
    if (word_lead_ok(R, w)) {
      out.push_back(with_resume(h, Resume{M::kWord}));
    } else {
      out.push_back(with_split(h, off, Resume{M::kWord}));
    }
    return;
  }
  if (c == CharClass::kDigit) {
    if (R.digits == DigitStyle::kSpaceRun && w == ' ') {
      out.push_back(with_resume(h, Resume{M::kDigits, 1}));
    } else {
      SplitHypo base = h;
      base.splits.push_back(off);
      for (const Resume& r : digit_entry(R)) {
        SplitHypo n = base;
        n.resume = r;
        out.push_back(std::move(n));
      }
    }
    return;
  }
  // punctuation (or apostrophe)
  if (w == ' ') {
    out.push_back(with_resume(h, Resume{M::kPunct}));
  } else {
    SplitHypo n = h;
    n.splits.push_back(off);
    dispatch_fresh(R, n, off, cp, out);
  }
}

// Dispatch `cp` as the first scalar of a fresh pretoken (split already
// recorded by the caller when applicable).
void dispatch_fresh(const RuleSet& R, const SplitHypo& h, uint64_t off, uint32_t cp,
                    std::vector<SplitHypo>& out) {
  (void)off;
  if (!R.split) {
    out.push_back(with_resume(h, Resume{M::kNoSplit}));
    return;
  }
  switch (char_class(cp)) {
    case CharClass::kLetter:
      out.push_back(with_resume(h, Resume{M::kWord}));
      return;
    case CharClass::kDigit: {
      for (const Resume& r : digit_entry(R)) out.push_back(with_resume(h, r));
      return;
    }
    case CharClass::kOther: {
      Resume r{M::kOther1};
      r.flag = (cp == '\'');
      out.push_back(with_resume(h, r));
      return;
    }
    case CharClass::kNewline:
      if (R.newline_run) {
        Resume r{M::kNlWait};
        r.flag = true;
        out.push_back(with_resume(h, r));
      } else {
        out.push_back(with_resume(h, Resume{M::kPlainRun, 1, cp}));
      }
      return;
    case CharClass::kSpace:
    case CharClass::kOtherWs:
      out.push_back(with_resume(h, Resume{M::kPlainRun, 1, cp}));
      return;
  }
}

// Close the current pretoken before `cp` and dispatch it fresh.
void close_and_dispatch(const RuleSet& R, const SplitHypo& h, uint64_t off, uint32_t cp,
                        std::vector<SplitHypo>& out) {
  SplitHypo n = h;
  n.splits.push_back(off);
  dispatch_fresh(R, n, off, cp, out);
}

// Looks up cp (must be a letter) against the contraction suffix table.
// Returns: 1 = completes a one-scalar suffix; 2 = starts a two-scalar suffix
// (second scalar written to `second`); 0 = no suffix starts with it.
int contraction_lookup(const RuleSet& R, uint32_t cp, uint32_t* second) {
  uint32_t c = R.contraction_fold_case ? fold_ascii(cp) : cp;
  if (c == 's' || c == 't' || c == 'm' || c == 'd') return 1;
  if (c == 'r') {
    *second = 'e';
    return 2;
  }
  if (c == 'v') {
    *second = 'e';
    return 2;
  }
  if (c == 'l') {
    *second = 'l';
    return 2;
  }
  return 0;
}

// Core transition: step hypothesis `h` by scalar `cp` starting at byte
// offset `off`. Successors appended to `out`; none appended == contradiction.
void step_scalar(const RuleSet& R, const SplitHypo& h, uint64_t off, uint32_t cp,
                 std::vector<SplitHypo>& out) {
  const Resume& r = h.resume;
  const CharClass c = char_class(cp);
  switch (r.m) {
    case M::kBoundary: {
      SplitHypo n = h;
      if (off > 0) n.splits.push_back(off);
      dispatch_fresh(R, n, off, cp, out);
      return;
    }
    case M::kNoSplit:
      out.push_back(h);
      return;
    case M::kWord:
      if (c == CharClass::kLetter) {
        out.push_back(h);
      } else {
        close_and_dispatch(R, h, off, cp, out);
      }
      return;
    case M::kWordPoison:
      if (cp == r.a) return;  // contraction would have matched; contradiction
      if (c == CharClass::kLetter) {
        out.push_back(with_resume(h, Resume{M::kWord}));
      } else {
        close_and_dispatch(R, h, off, cp, out);
      }
      return;
    case M::kOther1: {
      if (c == CharClass::kLetter) {
        if (r.flag && R.contractions) {
          uint32_t second = 0;
          int kind = contraction_lookup(R, cp, &second);
          if (kind == 1) {
            out.push_back(with_resume(h, Resume{M::kBoundary}));
            return;
          }
          if (kind == 2) {
            if (R.word_lead == WordLead::kNonAlnumNoCrlf) {
              Resume nr{M::kAposNeed, second};
              nr.flag = true;  // on miss the word absorbs the apostrophe
              out.push_back(with_resume(h, nr));
            } else {
              Resume alpha{M::kAposNeed, second};
              out.push_back(with_resume(h, alpha));
              out.push_back(with_split(h, off, Resume{M::kWordPoison, second}));
            }
            return;
          }
        }
        if (R.word_lead == WordLead::kNonAlnumNoCrlf) {
          out.push_back(with_resume(h, Resume{M::kWord}));
        } else {
          close_and_dispatch(R, h, off, cp, out);
        }
        return;
      }
      if (c == CharClass::kOther) {
        out.push_back(with_resume(h, Resume{M::kPunct}));
        return;
      }
      if (c == CharClass::kNewline && R.punct_newline_suffix) {
        out.push_back(with_resume(h, Resume{M::kPunctNl}));
        return;
      }
      close_and_dispatch(R, h, off, cp, out);
      return;
    }
    case M::kAposNeed: {
      uint32_t folded = R.contraction_fold_case ? fold_ascii(cp) : cp;
      if (folded == r.a) {
        out.push_back(with_resume(h, Resume{M::kBoundary}));
        return;
      }
      if (!r.flag) return;  // gpt2 alpha branch: contradiction
      if (c == CharClass::kLetter) {
        out.push_back(with_resume(h, Resume{M::kWord}));
      } else {
        close_and_dispatch(R, h, off, cp, out);
      }
      return;
    }
    case M::kPunct:
      if (c == CharClass::kOther) {
        out.push_back(h);
        return;
      }
      if (c == CharClass::kNewline && R.punct_newline_suffix) {
        out.push_back(with_resume(h, Resume{M::kPunctNl}));
        return;
      }
      close_and_dispatch(R, h, off, cp, out);
      return;
    case M::kPunctNl:
      if (c == CharClass::kNewline) {
        out.push_back(h);
      } else {
        close_and_dispatch(R, h, off, cp, out);
      }
      return;
    case M::kDigits: {
      if (c == CharClass::kDigit) {
        if (R.digits == DigitStyle::kGroupLeft) {
          if (r.a + 1 == R.digit_group) {
            out.push_back(with_resume(h, Resume{M::kBoundary}));
          } else {
            out.push_back(with_resume(h, Resume{M::kDigits, r.a + 1}));
          }
        } else {
          out.push_back(with_resume(h, Resume{M::kDigits, r.a + 1}));
        }
        return;
      }
      close_and_dispatch(R, h, off, cp, out);
      return;
    }
    case M::kDigitsRight: {
      const uint32_t f = r.a, n = r.b, g = R.digit_group;
      if (c == CharClass::kDigit) {
        bool group_start = (n >= f) && ((n - f) % g == 0);
        if (group_start) {
          out.push_back(with_split(h, off, Resume{M::kDigitsRight, f, n + 1}));
        } else {
          out.push_back(with_resume(h, Resume{M::kDigitsRight, f, n + 1}));
        }
        return;
      }
      if (n >= f && (n - f) % g == 0) close_and_dispatch(R, h, off, cp, out);
      return;
    }
    case M::kPlainRun: {
      if (c == CharClass::kNewline && R.newline_run) {
        Resume nr{M::kNlWait};
        nr.flag = true;
        out.push_back(with_resume(h, nr));
        return;
      }
      if (is_ws_class(c)) {
        uint32_t t = r.a + 1;
        out.push_back(with_resume(h, Resume{M::kPlainRun, t, t == 1 ? cp : 0}));
        out.push_back(with_split(h, off, Resume{M::kWsLast, cp}));
        return;
      }
      if (r.a == 1) {
        junction_join(R, h, off, r.b, cp, out);
      }
      // a >= 2: contradiction (the kWsLast sibling covers this future)
      return;
    }
    case M::kNlWait: {
      if (c == CharClass::kNewline) {
        Resume nr{M::kNlWait};
        nr.flag = true;
        out.push_back(with_resume(h, nr));
        return;
      }
      if (is_ws_class(c)) {
        Resume stay{M::kNlWait};
        stay.flag = false;
        out.push_back(with_resume(h, stay));
        // The "\s*[\r\n]+" piece can only end right after a newline.
        if (r.flag) out.push_back(with_split(h, off, Resume{M::kTailRun, 1, cp}));
        return;
      }
      if (r.flag) close_and_dispatch(R, h, off, cp, out);
      return;
    }
    case M::kTailRun: {
      if (c == CharClass::kNewline && R.newline_run) return;  // j was not the last newline
      if (is_ws_class(c)) {
        uint32_t t = r.a + 1;
        out.push_back(with_resume(h, Resume{M::kTailRun, t, t == 1 ? cp : 0}));
        out.push_back(with_split(h, off, Resume{M::kWsLast, cp}));
        return;
      }
      if (r.a == 1) {
        junction_join(R, h, off, r.b, cp, out);
      }
      return;
    }
    case M::kWsLast: {
      if (is_ws_class(c)) return;  // claimed to be the run's last ws scalar
      junction_join(R, h, off, r.a, cp, out);
      return;
    }
  }
}

bool resume_eos_consistent(const RuleSet& R, const Resume& r) {
  switch (r.m) {
    case M::kBoundary:
    case M::kNoSplit:
    case M::kWord:
    case M::kWordPoison:
    case M::kOther1:
    case M::kPunct:
    case M::kPunctNl:
    case M::kPlainRun:
    case M::kTailRun:
      return true;
    case M::kAposNeed:
      return r.flag;  // the word absorbs the partial suffix; gpt2 alpha dies
    case M::kDigits:
      return true;
    case M::kDigitsRight:
      return r.b >= r.a && (r.b - r.a) % R.digit_group == 0;
    case M::kNlWait:
      return r.flag;
    case M::kWsLast:
      return false;
  }
  return false;
}

}  // namespace

bool SplitHypo::same_state(const SplitHypo& o) const {
  return resume == o.resume && added_active == o.added_active && added_start == o.added_start &&
         added_progress == o.added_progress && pending_bytes == o.pending_bytes &&
         splits == o.splits && added.size() == o.added.size() &&
         std::equal(added.begin(), added.end(), o.added.begin(),
                    [](const AddedSpan& a, const AddedSpan& b) {
                      return a.start == b.start && a.end == b.end && a.pattern == b.pattern;
                    });
}

StreamSplitter::StreamSplitter(const RuleSet& rules, std::vector<std::string> added_patterns)
    : rules_(rules), added_(std::move(added_patterns)) {
  hypos_.emplace_back();
}

StreamSplitter::StreamSplitter(const RuleSet& rules, std::vector<std::string> added_patterns,
                               std::vector<SplitHypo> hypos, uint64_t consumed,
                               uint64_t added_frontier)
    : rules_(rules),
      added_(std::move(added_patterns)),
      hypos_(std::move(hypos)),
      consumed_(consumed),
      added_frontier_(added_frontier) {}

void StreamSplitter::retain(const std::vector<size_t>& indices) {
  std::vector<SplitHypo> kept;
  for (size_t i : indices) kept.push_back(hypos_.at(i));
  hypos_ = std::move(kept);
  if (hypos_.empty()) throw std::runtime_error("stream splitter: no hypothesis retained");
}

void StreamSplitter::gc(uint64_t keep_from) {
  for (SplitHypo& h : hypos_) {
    auto s = h.splits.begin();
    while (s != h.splits.end() && *s < keep_from) ++s;
    h.splits.erase(h.splits.begin(), s);
    auto a = h.added.begin();
    while (a != h.added.end() && a->end < keep_from) ++a;
    h.added.erase(h.added.begin(), a);
  }
}

namespace {

// Feed pending bytes (plus the new byte) into scalar steps. Returns false on
// contradiction. `spawnless` text stepping, shared by the streaming splitter
// and the lookahead simulation.
bool step_hypo_bytes(const RuleSet& rules, SplitHypo& h, uint64_t offset_of_byte, uint8_t byte,
                     std::vector<SplitHypo>& out) {
  h.pending_bytes.push_back(static_cast<char>(byte));
  std::vector<SplitHypo> frontier{std::move(h)};
  // Process as many complete scalars as the pending buffer holds.
  for (;;) {
    std::string& buf = frontier.front().pending_bytes;
    if (buf.empty()) break;
    auto n = utf8_seq_len(static_cast<uint8_t>(buf[0]));
    bool incomplete = false;
    if (n && buf.size() < *n) {
      incomplete = true;
      for (size_t i = 1; i < buf.size(); ++i) {
        if ((static_cast<uint8_t>(buf[i]) & 0xC0) != 0x80) {
          incomplete = false;
          break;
        }
      }
    }
    if (incomplete) break;
    DecodedChar d = decode_utf8(buf, 0);
    uint64_t scalar_off = offset_of_byte + 1 - frontier.front().pending_bytes.size();
    std::vector<SplitHypo> next;
    for (SplitHypo& f : frontier) {
      std::string rest = f.pending_bytes.substr(d.len);
      f.pending_bytes.clear();
      size_t before = next.size();
      step_scalar(rules, f, scalar_off, d.cp, next);
      for (size_t i = before; i < next.size(); ++i) next[i].pending_bytes = rest;
    }
    frontier = std::move(next);
    if (frontier.empty()) return false;
    // All successors share the same remaining buffer; loop to consume it.
    if (frontier.front().pending_bytes.empty()) break;
  }
  for (SplitHypo& f : frontier) out.push_back(std::move(f));
  return true;
}

// Resolve a hypothesis at end-of-text: flush pending bytes as invalid
// scalars, then check frontier consistency. Returns resolved hypo or nullopt.
std::optional<SplitHypo> resolve_hypo_at_end(const RuleSet& rules, const SplitHypo& h,
                                             uint64_t consumed) {
  std::vector<SplitHypo> frontier{h};
  // Incomplete UTF-8 at the very end: every buffered byte is an invalid
  // scalar of its own.
  while (!frontier.empty() && !frontier.front().pending_bytes.empty()) {
    std::vector<SplitHypo> next;
    for (SplitHypo& f : frontier) {
      std::string buf = f.pending_bytes;
      uint64_t off = consumed - buf.size();
      f.pending_bytes.clear();
      std::vector<SplitHypo> stepped;
      step_scalar(rules, f, off, 0xDC00u + static_cast<uint8_t>(buf[0]), stepped);
      for (SplitHypo& s : stepped) {
        s.pending_bytes = buf.substr(1);
        next.push_back(std::move(s));
      }
    }
    frontier = std::move(next);
  }
  std::optional<SplitHypo> best;
  for (SplitHypo& f : frontier) {
    if (f.added_active >= 0) continue;  // incomplete added-token match
    if (!resume_eos_consistent(rules, f.resume)) continue;
    if (best) continue;  // assignments are unique; keep the first survivor
    best = std::move(f);
  }
  return best;
}

}  // namespace

std::vector<SplitHypo> StreamSplitter::step_text(const RuleSet& rules, const SplitHypo& h,
                                                 uint64_t offset, uint8_t byte) {
  std::vector<SplitHypo> out;
  SplitHypo copy = h;
  step_hypo_bytes(rules, copy, offset, byte, out);
  return out;
}

bool StreamSplitter::eos_consistent(const RuleSet& rules, const SplitHypo& h) {
  return resolve_hypo_at_end(rules, h, 0).has_value() && h.pending_bytes.empty();
}

// Leftmost-longest resolution: committed added spans become definitive in
// scan order once no live in-progress candidate starting at or before them
// could still override the outcome. Hypotheses contradicting a definitive
// span die.
static void apply_added_definitive(std::vector<SplitHypo>& hypos, uint64_t& frontier) {
  for (;;) {
    uint64_t best_start = UINT64_MAX;
    size_t best_end = 0;
    for (const SplitHypo& h : hypos) {
      for (const AddedSpan& s : h.added) {
        if (s.start < frontier) continue;
        if (s.start < best_start || (s.start == best_start && s.end > best_end)) {
          best_start = s.start;
          best_end = s.end;
        }
      }
    }
    if (best_start == UINT64_MAX) return;
    for (const SplitHypo& h : hypos) {
      if (h.added_active >= 0 && h.added_start <= best_start) return;  // blocked
    }
    std::vector<SplitHypo> kept;
    for (SplitHypo& h : hypos) {
      for (const AddedSpan& s : h.added) {
        if (s.start == best_start && s.end == best_end) {
          kept.push_back(std::move(h));
          break;
        }
      }
    }
    hypos = std::move(kept);
    frontier = best_end;
  }
}

SplitDecision StreamSplitter::advance(uint8_t byte) {
  const uint64_t off = consumed_;
  std::vector<SplitHypo> next;

  for (SplitHypo& h : hypos_) {
    if (h.added_active >= 0) {
      const std::string& pat = added_[h.added_active];
      if (static_cast<uint8_t>(pat[h.added_progress]) == byte) {
        h.added_progress++;
        if (h.added_progress == pat.size()) {
          AddedSpan span{static_cast<size_t>(h.added_start),
                         static_cast<size_t>(h.added_start + pat.size()), h.added_active};
          SplitHypo n = h;
          n.added.push_back(span);
          n.added_active = -1;
          n.added_progress = 0;
          n.resume = Resume{M::kBoundary};
          next.push_back(std::move(n));
        } else {
          next.push_back(h);
        }
      }
      // mismatch: hypothesis dies
      continue;
    }
    // Text mode: spawn added-token candidates that begin at this byte.
    for (size_t i = 0; i < added_.size(); ++i) {
      if (added_[i].empty() || static_cast<uint8_t>(added_[i][0]) != byte) continue;
      auto resolved = resolve_hypo_at_end(rules_, h, off);
      if (!resolved) continue;
      SplitHypo cand = std::move(*resolved);
      cand.added_active = static_cast<int>(i);
      cand.added_start = off;
      cand.added_progress = 1;
      cand.resume = Resume{M::kBoundary};
      if (added_[i].size() == 1) {
        AddedSpan span{static_cast<size_t>(off), static_cast<size_t>(off + 1),
                       static_cast<int>(i)};
        cand.added.push_back(span);
        cand.added_active = -1;
        cand.added_progress = 0;
      }
      next.push_back(std::move(cand));
    }
    step_hypo_bytes(rules_, h, off, byte, next);
  }

  hypos_ = std::move(next);
  consumed_ = off + 1;
  apply_added_definitive(hypos_, added_frontier_);
  dedup();
  if (hypos_.empty()) throw std::runtime_error("stream splitter: no hypothesis survives");

  SplitDecision d;
  d.live_hypotheses = hypos_.size();
  size_t with_split = 0;
  bool pending = false;
  for (const SplitHypo& h : hypos_) {
    if (!h.pending_bytes.empty()) pending = true;
    bool split_here = false;
    for (auto it = h.splits.rbegin(); it != h.splits.rend() && *it >= off; ++it) {
      if (*it == off) split_here = true;
    }
    for (const AddedSpan& s : h.added) {
      if (s.start == off || s.end == off) split_here = true;
    }
    if (h.added_active >= 0 && h.added_start == off) split_here = true;
    if (split_here) ++with_split;
  }
  if (pending) {
    d.kind = SplitDecision::Kind::kAmbiguous;
  } else if (with_split == hypos_.size()) {
    d.kind = SplitDecision::Kind::kForcedSplit;
  } else if (with_split == 0) {
    d.kind = SplitDecision::Kind::kNoSplit;
  } else {
    d.kind = SplitDecision::Kind::kAmbiguous;
  }
  return d;
}

StreamSplitter::AddedScan StreamSplitter::scan_added() const {
  AddedScan scan;
  auto has = [](const std::vector<AddedSpan>& v, const AddedSpan& s) {
    for (const AddedSpan& x : v) {
      if (x.start == s.start && x.end == s.end && x.pattern == s.pattern) return true;
    }
    return false;
  };
  for (const SplitHypo& h : hypos_) {
    for (const AddedSpan& s : h.added) {
      if (s.end == consumed_ && !has(scan.full, s)) scan.full.push_back(s);
    }
    if (h.added_active >= 0) {
      AddedSpan s{static_cast<size_t>(h.added_start),
                  static_cast<size_t>(h.added_start + added_[h.added_active].size()),
                  h.added_active};
      if (!has(scan.partial, s)) scan.partial.push_back(s);
    }
  }
  return scan;
}

void StreamSplitter::dedup() {
  std::vector<SplitHypo> uniq;
  for (SplitHypo& h : hypos_) {
    bool dup = false;
    for (const SplitHypo& u : uniq) {
      if (u.same_state(h)) {
        dup = true;
        break;
      }
    }
    if (!dup) uniq.push_back(std::move(h));
  }
  hypos_ = std::move(uniq);
}

const SplitHypo& StreamSplitter::resolve_at_end() {
  auto r = peek_resolve_at_end();
  if (!r) throw std::runtime_error("stream splitter: end of text is inconsistent");
  hypos_.clear();
  hypos_.push_back(std::move(*r));
  return hypos_.front();
}

std::optional<SplitHypo> StreamSplitter::peek_resolve_at_end() const {
  std::vector<SplitHypo> survivors;
  for (const SplitHypo& h : hypos_) {
    auto r = resolve_hypo_at_end(rules_, h, consumed_);
    if (r) survivors.push_back(std::move(*r));
  }
  uint64_t frontier = added_frontier_;
  apply_added_definitive(survivors, frontier);
  if (survivors.empty()) return std::nullopt;
  return std::move(survivors.front());
}

}  // namespace bytelm
