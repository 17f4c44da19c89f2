#ifndef PDSTREAM_ERRORS_H_
#define PDSTREAM_ERRORS_H_

#include <stdexcept>
#include <string>

namespace pdstream {

// Invalid or out-of-range configuration (unknown profile, bad knob value).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input file. `line` is 1-based, 0 when not tied to a line.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, int line)
      : std::runtime_error(line > 0 ? what + " (line " + std::to_string(line) +
                                          ")"
                                    : what),
        line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

// Well-formed input that violates a data invariant.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A fit or estimator was handed too few samples.
class InsufficientDataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Output files with incompatible schemas were combined.
class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace pdstream

#endif  // PDSTREAM_ERRORS_H_
