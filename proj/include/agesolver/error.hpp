#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace agesolver {

// Every failure carries a category; the CLI prints it as a prefix ("IO/...")
// and maps it to an exit status.
enum class ErrorCategory { usage, io, integrity, encoding, not_found };

inline std::string_view category_name(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::usage: return "USAGE";
    case ErrorCategory::io: return "IO";
    case ErrorCategory::integrity: return "INTEGRITY";
    case ErrorCategory::encoding: return "ENCODING";
    case ErrorCategory::not_found: return "NOT_FOUND";
  }
  return "UNKNOWN";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

struct UsageError : Error {
  explicit UsageError(const std::string& w) : Error(ErrorCategory::usage, w) {}
};
struct IoError : Error {
  explicit IoError(const std::string& w) : Error(ErrorCategory::io, w) {}
};
/// Stored data does not match its digest, or a solver closure check failed.
struct IntegrityError : Error {
  explicit IntegrityError(const std::string& w) : Error(ErrorCategory::integrity, w) {}
};
/// A value cannot be represented (non power-of-two tile, digit >= base, field overflow).
struct EncodingError : Error {
  explicit EncodingError(const std::string& w) : Error(ErrorCategory::encoding, w) {}
};
struct NotFoundError : Error {
  explicit NotFoundError(const std::string& w) : Error(ErrorCategory::not_found, w) {}
};

}  // namespace agesolver
