#include "gpfq/error.hpp"

namespace gpfq {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::InvalidSpec: return "invalid-spec";
    case ErrorKind::ShapeMismatch: return "shape-mismatch";
    case ErrorKind::EmptyLevels: return "empty-levels";
    case ErrorKind::UnsupportedRegime: return "unsupported-regime";
    case ErrorKind::InsufficientPoints: return "insufficient-points";
    case ErrorKind::IncompatibleModel: return "incompatible-model";
    case ErrorKind::Io: return "io";
    case ErrorKind::Format: return "format";
    case ErrorKind::Config: return "config";
  }
  return "unknown";
}

}  // namespace gpfq
