#include "fps/harness/csv.hpp"

#include "fps/errors.hpp"

namespace fps::harness {

std::size_t CsvTable::column(std::string_view name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return i;
  }
  throw DataError("CSV has no column '" + std::string(name) + "'");
}

CsvTable parse_csv(std::string_view text) {
  std::size_t pos = 0;
  if (text.substr(0, 3) == "\xEF\xBB\xBF") pos = 3;

  CsvTable table;
  std::vector<std::string> record;
  std::string field;
  std::size_t record_start = pos;
  bool in_quotes = false;
  bool field_quoted = false;

  auto end_record = [&](std::size_t at) {
    record.push_back(std::move(field));
    field.clear();
    field_quoted = false;
    const bool blank = record.size() == 1 && record[0].empty();
    if (!blank) {
      if (table.header.empty()) {
        table.header = std::move(record);
      } else if (record.size() != table.header.size()) {
        throw ParseError("CSV row has " + std::to_string(record.size()) +
                             " fields, header has " +
                             std::to_string(table.header.size()),
                         record_start);
      } else {
        table.rows.push_back(std::move(record));
      }
    }
    record.clear();
    record_start = at;
  };

  while (pos < text.size()) {
    const char c = text[pos];
    if (in_quotes) {
      if (c == '"') {
        if (pos + 1 < text.size() && text[pos + 1] == '"') {
          field += '"';
          pos += 2;
          continue;
        }
        in_quotes = false;
      } else {
        field += c;
      }
      ++pos;
      continue;
    }
    switch (c) {
      case '"':
        if (!field.empty() || field_quoted) {
          throw ParseError("unexpected quote inside CSV field", pos);
        }
        in_quotes = true;
        field_quoted = true;
        ++pos;
        break;
      case ',':
        record.push_back(std::move(field));
        field.clear();
        field_quoted = false;
        ++pos;
        break;
      case '\r':
        if (pos + 1 < text.size() && text[pos + 1] == '\n') ++pos;
        [[fallthrough]];
      case '\n':
        ++pos;
        end_record(pos);
        break;
      default:
        if (field_quoted) {
          throw ParseError("characters after closing quote in CSV field", pos);
        }
        field += c;
        ++pos;
    }
  }
  if (in_quotes) throw ParseError("unterminated quoted CSV field", pos);
  if (!field.empty() || !record.empty() || field_quoted) end_record(pos);
  if (table.header.empty()) throw ParseError("CSV header line is missing", 0);
  return table;
}

std::string csv_field(std::string_view value) {
  if (value.find_first_of(",\"\r\n") == std::string_view::npos) {
    return std::string(value);
  }
  std::string out = "\"";
  for (char c : value) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

}  // namespace fps::harness
