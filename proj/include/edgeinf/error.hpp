#pragma once

#include <stdexcept>
#include <string>

namespace edgeinf {

enum class ErrorKind {
  Io,        // unreadable/unwritable files
  Schema,    // malformed or inconsistent input data
  Invalid,   // invalid argument / precondition violation
  Numeric,   // non-finite values, divergence
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

inline const char* error_kind_name(ErrorKind k) {
  switch (k) {
    case ErrorKind::Io: return "io";
    case ErrorKind::Schema: return "schema";
    case ErrorKind::Invalid: return "invalid";
    case ErrorKind::Numeric: return "numeric";
  }
  return "unknown";
}

}  // namespace edgeinf
