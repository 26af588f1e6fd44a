#pragma once

// UTF-8 string helpers shared by the routing, matching and metric code.

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace regrec::text {

/// Decodes UTF-8 into Unicode scalar values. Invalid bytes decode to U+FFFD.
std::u32string decode_utf8(std::string_view s);
std::string encode_utf8(std::u32string_view s);

/// Length in scalar values.
std::size_t length(std::string_view s);

std::string trim(std::string_view s);
/// Trims and collapses internal whitespace runs to one space.
std::string collapse_whitespace(std::string_view s);
/// Lower-cases ASCII and the Latin-1 letters used in Finnish and Swedish
/// (Å Ä Ö Ü É ...). Diacritics are kept.
std::string casefold(std::string_view s);

/// ASCII letter or any non-ASCII alphabetic scalar.
bool is_letter(char32_t c);
bool has_letter(std::string_view s);
/// Only digits, punctuation and whitespace, with at least one digit.
bool is_numeric(std::string_view s);

/// Unit-cost Levenshtein distance over scalar values.
std::size_t levenshtein(std::u32string_view a, std::u32string_view b);
std::size_t levenshtein(std::string_view a, std::string_view b);

}  // namespace regrec::text
