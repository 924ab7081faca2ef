// Copyright 2026 The turncourt Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "turncourt/error.hpp"

namespace turncourt::csv {

struct Row {
  std::vector<std::string> fields;
  std::size_t line = 0;  // 1-based physical line where the record starts
};

struct Table {
  std::vector<std::string> header;
  std::vector<Row> rows;

  // Index of `name` in the header, or throws ParseError.
  std::size_t column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw ParseError("missing CSV column '" + std::string(name) + "'");
  }
};

// RFC 4180 records with double-quote escaping. Blank lines and lines whose
// first character is '#' are skipped outside of quoted fields.
inline std::vector<Row> parse_records(std::string_view text) {
  std::vector<Row> out;
  std::size_t i = 0;
  std::size_t line = 1;
  const std::size_t n = text.size();
  if (n >= 3 && text.substr(0, 3) == "\xEF\xBB\xBF") i = 3;

  while (i < n) {
    if (text[i] == '\n') {
      ++i;
      ++line;
      continue;
    }
    if (text[i] == '\r') {
      ++i;
      continue;
    }
    if (text[i] == '#') {
      while (i < n && text[i] != '\n') ++i;
      continue;
    }
    Row row;
    row.line = line;
    std::string field;
    bool in_quotes = false;
    bool field_was_quoted = false;
    for (;;) {
      if (i >= n) {
        if (in_quotes) throw ParseError("unterminated quoted field", row.line);
        row.fields.push_back(std::move(field));
        break;
      }
      const char c = text[i];
      if (in_quotes) {
        if (c == '"') {
          if (i + 1 < n && text[i + 1] == '"') {
            field.push_back('"');
            i += 2;
          } else {
            in_quotes = false;
            ++i;
          }
        } else {
          if (c == '\n') ++line;
          field.push_back(c);
          ++i;
        }
        continue;
      }
      if (c == '"' && field.empty() && !field_was_quoted) {
        in_quotes = true;
        field_was_quoted = true;
        ++i;
      } else if (c == ',') {
        row.fields.push_back(std::move(field));
        field.clear();
        field_was_quoted = false;
        ++i;
      } else if (c == '\r') {
        ++i;
      } else if (c == '\n') {
        row.fields.push_back(std::move(field));
        ++i;
        ++line;
        break;
      } else {
        field.push_back(c);
        ++i;
      }
    }
    out.push_back(std::move(row));
  }
  return out;
}

// First record is the header; every data row must match its width.
inline Table parse(std::string_view text) {
  Table t;
  auto records = parse_records(text);
  if (records.empty()) return t;
  t.header = std::move(records.front().fields);
  for (auto& h : t.header) {
    // Tolerate a trailing CR or spaces in hand-written headers.
    while (!h.empty() && (h.back() == ' ' || h.back() == '\r')) h.pop_back();
  }
  for (std::size_t r = 1; r < records.size(); ++r) {
    if (records[r].fields.size() != t.header.size())
      throw ParseError("expected " + std::to_string(t.header.size()) +
                           " fields, found " +
                           std::to_string(records[r].fields.size()),
                       static_cast<std::int64_t>(records[r].line));
    t.rows.push_back(std::move(records[r]));
  }
  return t;
}

inline std::string escape(std::string_view field) {
  if (field.find_first_of(",\"\n\r") == std::string_view::npos)
    return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

inline std::string join(const std::vector<std::string>& fields) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out.push_back(',');
    out += escape(fields[i]);
  }
  out.push_back('\n');
  return out;
}

}  // namespace turncourt::csv
