#include "panolight/core/error.hpp"

namespace panolight {

const char* to_string(Errc code) noexcept {
  switch (code) {
    case Errc::invalid_argument: return "invalid_argument";
    case Errc::shape_mismatch: return "shape_mismatch";
    case Errc::degenerate_median: return "degenerate_median";
    case Errc::quadrature_tolerance: return "quadrature_tolerance";
    case Errc::empty_coverage: return "empty_coverage";
    case Errc::empty_visibility: return "empty_visibility";
    case Errc::malformed_scanline: return "malformed_scanline";
    case Errc::malformed_header: return "malformed_header";
    case Errc::truncated_scanline: return "truncated_scanline";
    case Errc::unsupported_format: return "unsupported_format";
    case Errc::io_error: return "io_error";
    case Errc::archive_format: return "archive_format";
    case Errc::empty_source: return "empty_source";
    case Errc::divergence: return "divergence";
    case Errc::empty_observation: return "empty_observation";
    case Errc::empty_mask: return "empty_mask";
    case Errc::mask_not_strict_subset: return "mask_not_strict_subset";
    case Errc::empty_foreground: return "empty_foreground";
    case Errc::all_pixels_skipped: return "all_pixels_skipped";
    case Errc::length_mismatch: return "length_mismatch";
  }
  return "unknown";
}

}  // namespace panolight
