#pragma once

#include <stdexcept>
#include <string>

namespace dagtf {

// Bad input: malformed files, inconsistent graphs, insufficient precision.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public ValidationError {
 public:
  ParseError(const std::string& what, int line, int column)
      : ValidationError(what + " (line " + std::to_string(line) + ", column " +
                        std::to_string(column) + ")"),
        line_(line),
        column_(column) {}

  int line() const { return line_; }
  int column() const { return column_; }

 private:
  int line_;
  int column_;
};

}  // namespace dagtf
