#pragma once

#include "panolight/core/image.hpp"

namespace panolight::pano {

/// Linear-radiance equirectangular panorama: 3 channels, W = 2H, finite and
/// nonnegative. The constructor validates; a constructed value always holds.
class HdrPanorama {
 public:
  HdrPanorama() = default;
  explicit HdrPanorama(ImageF pixels);

  const ImageF& pixels() const { return pixels_; }
  int height() const { return pixels_.height(); }
  int width() const { return pixels_.width(); }

  float max_value() const { return pixels_.empty() ? 0.f : pixels_.array().maxCoeff(); }

 private:
  ImageF pixels_;
};

/// Tone-mapped, clamped panorama with every value in [0, 1]; W = 2H.
class LdrPanorama {
 public:
  LdrPanorama() = default;
  explicit LdrPanorama(ImageF pixels);

  const ImageF& pixels() const { return pixels_; }
  int height() const { return pixels_.height(); }
  int width() const { return pixels_.width(); }

 private:
  ImageF pixels_;
};

/// Throws shape_mismatch unless `image` is 3-channel with width == 2 * height.
void require_panorama_shape(const ImageF& image);

HdrPanorama constant_hdr(int height, float value);

}  // namespace panolight::pano
