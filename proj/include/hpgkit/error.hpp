#pragma once

#include <stdexcept>
#include <string>

namespace hpgkit {

/// Base class for every domain failure raised by the toolkit. The CLI maps
/// these to exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A failure tied to a position in some text input (grammar, source, document).
class SyntaxError : public Error {
 public:
  SyntaxError(const std::string& what, int line, int col)
      : Error(what + " at " + std::to_string(line) + ":" + std::to_string(col)),
        line_(line),
        col_(col) {}

  int line() const { return line_; }
  int col() const { return col_; }

 private:
  int line_;
  int col_;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

}  // namespace hpgkit
