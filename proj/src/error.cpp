#include "maskvc/error.hpp"

namespace maskvc {

std::string_view error_class(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kUsage:
      return "usage";
    case ErrorKind::kIo:
      return "io";
    case ErrorKind::kFormat:
      return "format";
    case ErrorKind::kConfig:
      return "config";
    case ErrorKind::kData:
      return "data";
    case ErrorKind::kNumeric:
      return "numeric";
    case ErrorKind::kCheckpoint:
      return "checkpoint";
  }
  return "unknown";
}

}  // namespace maskvc
