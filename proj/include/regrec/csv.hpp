#pragma once

// Minimal RFC 4180 writer/reader.

#include <string>
#include <string_view>
#include <vector>

namespace regrec::csv {

using Row = std::vector<std::string>;

/// Quotes the field when it contains a comma, quote, CR or LF.
std::string escape(std::string_view field);
std::string format_row(const Row& row);

/// Parses a whole document. Quoted fields may span lines. Rows are
/// terminated by LF or CRLF; a trailing terminator does not add a row.
std::vector<Row> parse(std::string_view text);

}  // namespace regrec::csv
