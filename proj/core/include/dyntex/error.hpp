#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace dyntex {

/// Failure classes raised by the engine. Each loader/validator failure maps to
/// exactly one code so callers (and the CLI exit-code table) can dispatch on it.
enum class ErrorCode {
  invalid_argument,
  invalid_shape,
  shape_mismatch,
  unknown_layer,
  missing_tensor,
  bad_magic,
  bad_version,
  truncated,
  corrupt,
  io,
  missing_metadata,
  consistency,
  unsupported_format,
  missing_frame,
  non_finite,
  non_descent,
  line_search_failed,
};

std::string_view to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace dyntex
