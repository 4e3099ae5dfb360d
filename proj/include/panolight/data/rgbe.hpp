#pragma once

#include <filesystem>

#include "panolight/core/image.hpp"
#include "panolight/pano/panorama.hpp"

namespace panolight::data {

/// Radiance RGBE (.hdr) reader. Accepts flat, old-style RLE, and new-style
/// (per-channel) RLE scanlines with a "-Y H +X W" resolution line.
/// Errors: malformed_header, malformed_scanline, truncated_scanline,
/// unsupported_format, io_error.
ImageF read_rgbe(const std::filesystem::path& path);

/// Writes `FORMAT=32-bit_rle_rgbe` with new-style RLE scanlines (flat when the
/// width is outside [8, 32767]).
void write_rgbe(const ImageF& image, const std::filesystem::path& path);

pano::HdrPanorama load_hdr(const std::filesystem::path& path);
void save_hdr(const pano::HdrPanorama& pano, const std::filesystem::path& path);

/// Binary PPM (P6) preview of a [0,1] image, gamma already applied by caller.
void write_ppm(const ImageF& image, const std::filesystem::path& path);
ImageF read_ppm(const std::filesystem::path& path);

}  // namespace panolight::data
