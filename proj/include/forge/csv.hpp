#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "forge/error.hpp"

namespace forge::io {

/// RFC 4180 CSV: comma separated, double-quote quoting, "" escapes a quote,
/// quoted fields may span lines. The first record is the header; every row
/// becomes a JSON object of strings keyed by header name.
inline std::vector<nlohmann::json> parse_csv(const std::string &content) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false, field_started = false;
  auto end_field = [&] {
    row.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_row = [&] {
    end_field();
    if (!(row.size() == 1 && row[0].empty())) records.push_back(std::move(row));
    row.clear();
  };
  for (std::size_t i = 0; i < content.size(); ++i) {
    const char c = content[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < content.size() && content[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"' && !field_started) {
      quoted = true;
      field_started = true;
    } else if (c == ',') {
      end_field();
    } else if (c == '\n') {
      end_row();
    } else if (c != '\r') {
      field.push_back(c);
      field_started = true;
    }
  }
  if (quoted) throw Error(ErrorKind::schema, "csv: unterminated quoted field");
  if (field_started || !row.empty()) end_row();

  std::vector<nlohmann::json> out;
  if (records.empty()) return out;
  const auto &header = records.front();
  for (std::size_t r = 1; r < records.size(); ++r) {
    nlohmann::json obj = nlohmann::json::object();
    for (std::size_t c = 0; c < header.size(); ++c)
      obj[header[c]] = c < records[r].size() ? records[r][c] : std::string();
    out.push_back(std::move(obj));
  }
  return out;
}

} // namespace forge::io
