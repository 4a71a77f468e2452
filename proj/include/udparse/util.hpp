// String splitting, round-trip-safe number formatting, and the flat
// key=value config format used by the command-line tools.
#pragma once

#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "udparse/error.hpp"

namespace udparse {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' ||
                        s.front() == '\r' || s.front() == '\n')) {
    s.remove_prefix(1);
  }
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' ||
                        s.back() == '\r' || s.back() == '\n')) {
    s.remove_suffix(1);
  }
  return s;
}

// Splits on every occurrence of `sep`, keeping empty fields. Suitable for
// TSV columns.
inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || s[i] == sep) {
      out.emplace_back(s.substr(start, i - start));
      start = i + 1;
    }
  }
  return out;
}

// Splits on runs of blanks, dropping empty fields.
inline std::vector<std::string> split_ws(std::string_view s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == '\r')) ++i;
    std::size_t start = i;
    while (i < s.size() && s[i] != ' ' && s[i] != '\t' && s[i] != '\r') ++i;
    if (i > start) out.emplace_back(s.substr(start, i - start));
  }
  return out;
}

// Shortest decimal string that round-trips the exact double value.
inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

// Fixed two decimals; the convention for reported percentages.
inline std::string format_percent(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return std::string(buf);
}

inline double parse_double(std::string_view s, std::size_t line = 0) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    if (line > 0) throw ParseError(line, "not a number: \"" + std::string(s) + "\"");
    throw ParseError("not a number: \"" + std::string(s) + "\"");
  }
  return v;
}

inline long long parse_integer(std::string_view s, std::size_t line = 0) {
  long long v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    if (line > 0) throw ParseError(line, "not an integer: \"" + std::string(s) + "\"");
    throw ParseError("not an integer: \"" + std::string(s) + "\"");
  }
  return v;
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text_file(const std::string& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write file: " + path);
  out << text;
  if (!out) throw DataError("failed writing file: " + path);
}

// Flat key=value config text. '#' starts a comment, blank lines are
// skipped, keys may repeat (repeats are meaningful for e.g. mix sources).
class KeyValueFile {
 public:
  static KeyValueFile parse(std::istream& in) {
    KeyValueFile kv;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      std::string_view body = trim(line);
      if (body.empty() || body.front() == '#') continue;
      auto eq = body.find('=');
      if (eq == std::string_view::npos) {
        throw ParseError(lineno, "expected key=value, got \"" + std::string(body) + "\"");
      }
      std::string key(trim(body.substr(0, eq)));
      std::string value(trim(body.substr(eq + 1)));
      if (key.empty()) throw ParseError(lineno, "empty key");
      kv.items_.emplace_back(std::move(key), std::move(value));
    }
    return kv;
  }

  static KeyValueFile parse_string(std::string_view text) {
    std::istringstream in{std::string(text)};
    return parse(in);
  }

  static KeyValueFile load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open file: " + path);
    return parse(in);
  }

  std::optional<std::string> get(std::string_view key) const {
    std::optional<std::string> found;
    for (const auto& [k, v] : items_) {
      if (k == key) found = v;
    }
    return found;
  }

  std::vector<std::string> get_all(std::string_view key) const {
    std::vector<std::string> out;
    for (const auto& [k, v] : items_) {
      if (k == key) out.push_back(v);
    }
    return out;
  }

  const std::vector<std::pair<std::string, std::string>>& items() const {
    return items_;
  }

 private:
  std::vector<std::pair<std::string, std::string>> items_;
};

}  // namespace udparse
