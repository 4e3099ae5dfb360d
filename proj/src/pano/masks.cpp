#include "panolight/pano/masks.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace panolight::pano {

Eigen::Index focal_count(Eigen::Index visible, double fraction) {
  require(fraction > 0 && fraction <= 1, Errc::invalid_argument,
          "focal fraction must be in (0, 1]");
  // The epsilon keeps products like 0.1 * 30 = 3.0000000000000004 from rounding up.
  const auto k = Eigen::Index(std::ceil(fraction * double(visible) - 1e-9));
  return std::clamp<Eigen::Index>(k, visible > 0 ? 1 : 0, visible);
}

Mask focal_mask(const LdrPanorama& masked, const Mask& visibility, double fraction) {
  const ImageF& img = masked.pixels();
  require(visibility.rows() == img.height() && visibility.cols() == img.width(),
          Errc::shape_mismatch, "focal_mask: visibility shape mismatch");
  const Eigen::Index visible = visibility.count();
  if (visible == 0) fail(Errc::empty_visibility, "focal_mask: empty visibility");
  const Eigen::Index k = focal_count(visible, fraction);

  struct Candidate {
    float luminance;
    Eigen::Index index;
  };
  std::vector<Candidate> candidates;
  candidates.reserve(std::size_t(visible));
  const Eigen::Index n = img.pixel_count();
  const float* r = img.data();
  const float* g = r + n;
  const float* b = g + n;
  const bool* vis = visibility.data();
  for (Eigen::Index i = 0; i < n; ++i)
    if (vis[i]) candidates.push_back({(r[i] + g[i] + b[i]) / 3.f, i});

  auto brighter = [](const Candidate& a, const Candidate& b) {
    return a.luminance != b.luminance ? a.luminance > b.luminance : a.index < b.index;
  };
  std::nth_element(candidates.begin(), candidates.begin() + (k - 1), candidates.end(), brighter);

  Mask focal = Mask::Constant(img.height(), img.width(), false);
  for (Eigen::Index i = 0; i < k; ++i) focal.data()[candidates[std::size_t(i)].index] = true;
  return focal;
}

MaskSet make_mask_set(const LdrPanorama& masked, const Mask& visibility, double fraction) {
  return {visibility, focal_mask(masked, visibility, fraction)};
}

}  // namespace panolight::pano
