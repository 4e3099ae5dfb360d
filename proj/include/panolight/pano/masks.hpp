#pragma once

#include "panolight/core/image.hpp"
#include "panolight/pano/panorama.hpp"

namespace panolight::pano {

struct MaskSet {
  Mask visibility;
  Mask focal;
};

/// Number of pixels a focal mask selects: ceil(fraction * visible).
Eigen::Index focal_count(Eigen::Index visible, double fraction);

/// Marks the ceil(fraction * |visible|) visible pixels with the largest
/// luminance (mean of RGB). Ties go to the earlier pixel in row-major order.
Mask focal_mask(const LdrPanorama& masked, const Mask& visibility, double fraction = 0.10);

MaskSet make_mask_set(const LdrPanorama& masked, const Mask& visibility,
                      double fraction = 0.10);

}  // namespace panolight::pano
