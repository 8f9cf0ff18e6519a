#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace framing {

inline bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

std::string_view trim(std::string_view s);

std::string ascii_lower(std::string_view s);

/// Whitespace-delimited tokens. Punctuation-only tokens are tokens too.
std::vector<std::string_view> whitespace_tokens(std::string_view s);

std::size_t word_count(std::string_view s);

/// Collapses whitespace runs to one space, trims, and lower-cases ASCII.
std::string normalize_for_dedup(std::string_view s);

/// Number of Unicode code points in a UTF-8 string. Invalid continuation
/// bytes are counted as one code point each.
std::size_t utf8_length(std::string_view s);

/// Byte offset of code point `cp` in `s`, or nullopt when cp > length.
std::optional<std::size_t> utf8_byte_offset(std::string_view s, std::size_t cp);

}  // namespace framing
