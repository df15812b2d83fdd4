#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace fps::harness {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  // Index of a header column; throws DataError when absent.
  std::size_t column(std::string_view name) const;
};

// RFC 4180 style: comma separated, optional double quotes with "" escapes,
// LF or CRLF line ends, a leading UTF-8 BOM is skipped. The header line is
// required and every row must have as many fields as the header. Throws
// ParseError with the byte offset of the offending field or line.
CsvTable parse_csv(std::string_view text);

// Quotes the field when it contains a comma, quote or line break.
std::string csv_field(std::string_view value);

}  // namespace fps::harness
