#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace maskvc {

// Error classes surface verbatim on the CLI's single-line failure report.
enum class ErrorKind {
  kUsage,       // bad arguments or flag combinations
  kIo,          // missing file, unwritable directory, short read
  kFormat,      // malformed WAV / feature / checkpoint container
  kConfig,      // invalid or inconsistent configuration
  kData,        // data violates a precondition (too short, empty corpus, ...)
  kNumeric,     // NaN/Inf encountered
  kCheckpoint,  // checkpoint incompatible with the requested config
};

std::string_view error_class(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace maskvc
