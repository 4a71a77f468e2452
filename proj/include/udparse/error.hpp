// Error types shared across the toolkit.
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace udparse {

// Malformed input text: CoNLL-U files, vocabularies, embedding tables,
// config files. Carries a 1-based line number when one is known.
class ParseError : public std::runtime_error {
 public:
  explicit ParseError(const std::string& message)
      : std::runtime_error(message), line_(0) {}
  ParseError(std::size_t line, const std::string& message)
      : std::runtime_error("line " + std::to_string(line) + ": " + message),
        line_(line) {}

  // 0 when no line number applies.
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// Well-formed inputs that the requested computation cannot handle:
// dimension mismatches, missing embedding records, invalid trees,
// degenerate weights.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace udparse
