#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace bytelm {

// Unicode general-category predicates over scalar values (generated tables).
bool is_letter(uint32_t cp);
bool is_number(uint32_t cp);
bool is_whitespace(uint32_t cp);

// Result of decoding one UTF-8 scalar from the front of a byte string.
struct DecodedChar {
  uint32_t cp = 0;
  uint32_t len = 0;  // bytes consumed; 0 means invalid leading byte
};

// Decodes the scalar starting at text[pos]. Invalid sequences decode as a
// single byte with cp = 0xDC00 + byte (lone surrogate range, never a real
// scalar), so arbitrary byte streams always make progress.
DecodedChar decode_utf8(std::string_view text, size_t pos);

// Number of continuation bytes expected after a leading byte, or nullopt if
// the byte cannot start a well-formed sequence.
std::optional<uint32_t> utf8_seq_len(uint8_t lead);

void append_utf8(std::string& out, uint32_t cp);

inline bool is_invalid_byte_cp(uint32_t cp) { return cp >= 0xDC00 && cp <= 0xDCFF; }

}  // namespace bytelm
