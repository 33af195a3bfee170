#include "bytelm/unicode.hpp"

namespace bytelm {

std::optional<uint32_t> utf8_seq_len(uint8_t lead) {
  if (lead < 0x80) return 1;
  if ((lead & 0xE0) == 0xC0) return 2;
  if ((lead & 0xF0) == 0xE0) return 3;
  if ((lead & 0xF8) == 0xF0) return 4;
  return std::nullopt;
}

DecodedChar decode_utf8(std::string_view text, size_t pos) {
  const auto bad = [&](void) -> DecodedChar {
    return {0xDC00u + static_cast<uint8_t>(text[pos]), 1};
  };
  uint8_t lead = static_cast<uint8_t>(text[pos]);
  auto n = utf8_seq_len(lead);
  if (!n) return bad();
  if (*n == 1) return {lead, 1};
  if (pos + *n > text.size()) return bad();
  uint32_t cp = lead & (0x7F >> *n);
  for (uint32_t i = 1; i < *n; ++i) {
    uint8_t c = static_cast<uint8_t>(text[pos + i]);
    if ((c & 0xC0) != 0x80) return bad();
    cp = (cp << 6) | (c & 0x3F);
  }
  // Reject overlong encodings and surrogates.
  static constexpr uint32_t kMin[5] = {0, 0, 0x80, 0x800, 0x10000};
  if (cp < kMin[*n] || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) return bad();
  return {cp, *n};
}

void append_utf8(std::string& out, uint32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

}  // namespace bytelm
