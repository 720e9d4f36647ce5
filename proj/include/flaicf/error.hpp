#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace flaicf {

enum class ErrorKind {
  invalid_argument,
  shape_mismatch,
  io,
  format,          // bad magic / unparsable checkpoint header
  version,         // checkpoint written by another format version
  truncated,       // body shorter than the header promises
  size_mismatch,   // header dimensions disagree with the body size
  parse,           // malformed interaction line
  empty_dataset,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_argument: return "invalid_argument";
    case ErrorKind::shape_mismatch: return "shape_mismatch";
    case ErrorKind::io: return "io";
    case ErrorKind::format: return "format";
    case ErrorKind::version: return "version";
    case ErrorKind::truncated: return "truncated";
    case ErrorKind::size_mismatch: return "size_mismatch";
    case ErrorKind::parse: return "parse";
    case ErrorKind::empty_dataset: return "empty_dataset";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

inline void require(bool condition, const std::string& what,
                    ErrorKind kind = ErrorKind::invalid_argument) {
  if (!condition) fail(kind, what);
}

}  // namespace flaicf
