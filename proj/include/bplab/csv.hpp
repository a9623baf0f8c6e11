#pragma once

// Minimal RFC 4180 reader/writer: comma separated, fields containing a
// comma, quote, CR or LF are quoted and inner quotes doubled.

#include <charconv>
#include <cstdio>
#include <string>
#include <string_view>
#include <vector>

#include "bplab/error.hpp"

namespace bplab::csv {

inline void append_field(std::string &out, std::string_view field) {
  const bool quote = field.find_first_of(",\"\r\n") != std::string_view::npos;
  if (!quote) {
    out += field;
    return;
  }
  out += '"';
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
}

inline std::string format_row(const std::vector<std::string> &fields) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out += ',';
    append_field(out, fields[i]);
  }
  out += '\n';
  return out;
}

/// Fixed-point with `decimals` digits, independent of the C locale.
inline std::string format_fixed(double v, int decimals) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed, decimals);
  if (ec != std::errc()) return "nan";
  std::string s(buf, p);
  if (s.starts_with('-') && s.find_first_not_of("-0.") == std::string::npos) s.erase(0, 1); // no "-0.000000"
  return s;
}

struct Row {
  std::size_t line = 0; // 1-based line the row starts on
  std::vector<std::string> fields;
};

/// Splits a whole document into rows. Quoted fields may span lines.
inline std::vector<Row> parse(std::string_view text) {
  std::vector<Row> rows;
  std::size_t i = 0;
  std::size_t line = 1;
  while (i < text.size()) {
    Row row;
    row.line = line;
    std::string field;
    bool in_row = true;
    while (in_row) {
      field.clear();
      if (i < text.size() && text[i] == '"') {
        ++i;
        for (;;) {
          if (i >= text.size()) fail(ErrorKind::MalformedRow, "line " + std::to_string(row.line) + ": unterminated quote");
          const char c = text[i++];
          if (c == '"') {
            if (i < text.size() && text[i] == '"') {
              field += '"';
              ++i;
            } else {
              break;
            }
          } else {
            if (c == '\n') ++line;
            field += c;
          }
        }
      } else {
        while (i < text.size() && text[i] != ',' && text[i] != '\n' && text[i] != '\r') field += text[i++];
      }
      row.fields.push_back(field);
      if (i >= text.size()) {
        in_row = false;
      } else if (text[i] == ',') {
        ++i;
      } else if (text[i] == '\r' || text[i] == '\n') {
        if (text[i] == '\r') ++i;
        if (i < text.size() && text[i] == '\n') ++i;
        ++line;
        in_row = false;
      } else {
        fail(ErrorKind::MalformedRow, "line " + std::to_string(row.line) + ": junk after quoted field");
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

template <class T> bool parse_number(std::string_view s, T &out) {
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && p == s.data() + s.size();
}

} // namespace bplab::csv
