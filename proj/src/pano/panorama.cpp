#include "panolight/pano/panorama.hpp"

#include <string>

namespace panolight::pano {

void require_panorama_shape(const ImageF& image) {
  require(image.channels() == 3, Errc::shape_mismatch, "panorama must have 3 channels");
  require(image.height() >= 1 && image.width() == 2 * image.height(), Errc::shape_mismatch,
          "panorama must satisfy W = 2H (got " + std::to_string(image.height()) + "x" +
              std::to_string(image.width()) + ")");
}

HdrPanorama::HdrPanorama(ImageF pixels) : pixels_(std::move(pixels)) {
  require_panorama_shape(pixels_);
  require(pixels_.array().allFinite(), Errc::invalid_argument, "HDR panorama has NaN/Inf pixels");
  require((pixels_.array() >= 0.f).all(), Errc::invalid_argument,
          "HDR panorama has negative pixels");
}

LdrPanorama::LdrPanorama(ImageF pixels) : pixels_(std::move(pixels)) {
  require_panorama_shape(pixels_);
  require(pixels_.array().allFinite(), Errc::invalid_argument, "LDR panorama has NaN/Inf pixels");
  require((pixels_.array() >= 0.f).all() && (pixels_.array() <= 1.f).all(),
          Errc::invalid_argument, "LDR panorama pixels must lie in [0, 1]");
}

HdrPanorama constant_hdr(int height, float value) {
  return HdrPanorama(ImageF(height, 2 * height, 3, value));
}

}  // namespace panolight::pano
