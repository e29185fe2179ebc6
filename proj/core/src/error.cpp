#include "dyntex/error.hpp"

namespace dyntex {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid-argument";
    case ErrorCode::invalid_shape: return "invalid-shape";
    case ErrorCode::shape_mismatch: return "shape-mismatch";
    case ErrorCode::unknown_layer: return "unknown-layer";
    case ErrorCode::missing_tensor: return "missing-tensor";
    case ErrorCode::bad_magic: return "bad-magic";
    case ErrorCode::bad_version: return "bad-version";
    case ErrorCode::truncated: return "truncated";
    case ErrorCode::corrupt: return "corrupt";
    case ErrorCode::io: return "io";
    case ErrorCode::missing_metadata: return "missing-metadata";
    case ErrorCode::consistency: return "consistency";
    case ErrorCode::unsupported_format: return "unsupported-format";
    case ErrorCode::missing_frame: return "missing-frame";
    case ErrorCode::non_finite: return "non-finite";
    case ErrorCode::non_descent: return "non-descent";
    case ErrorCode::line_search_failed: return "line-search-failed";
  }
  return "unknown";
}

}  // namespace dyntex
