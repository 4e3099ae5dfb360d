#pragma once

#include <stdexcept>
#include <string>

namespace panolight {

enum class Errc {
  invalid_argument,
  shape_mismatch,
  degenerate_median,
  quadrature_tolerance,
  empty_coverage,
  empty_visibility,
  malformed_scanline,
  malformed_header,
  truncated_scanline,
  unsupported_format,
  io_error,
  archive_format,
  empty_source,
  divergence,
  empty_observation,
  empty_mask,
  mask_not_strict_subset,
  empty_foreground,
  all_pixels_skipped,
  length_mismatch,
};

/// Stable machine-readable name, e.g. "truncated_scanline".
const char* to_string(Errc code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& message) {
  throw Error(code, message);
}

inline void require(bool condition, Errc code, const std::string& message) {
  if (!condition) fail(code, message);
}

}  // namespace panolight
