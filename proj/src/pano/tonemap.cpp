#include "panolight/pano/tonemap.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace panolight::pano {

void ToneMapParams::validate() const {
  require(std::isfinite(alpha) && alpha > 0, Errc::invalid_argument, "tone map alpha must be > 0");
  require(std::isfinite(gamma) && gamma > 0, Errc::invalid_argument, "tone map gamma must be > 0");
}

ImageF tonemap(const ImageF& x, const ToneMapParams& p) {
  p.validate();
  require((x.array() >= 0.f).all(), Errc::invalid_argument, "tonemap: negative input");
  ImageF out(x.height(), x.width(), x.channels());
  out.array() = tonemap_expr(x.array(), p);
  return out;
}

ImageF tonemap(const HdrPanorama& x, const ToneMapParams& p) { return tonemap(x.pixels(), p); }

ImageF inverse_tonemap_image(const ImageF& xp, const ToneMapParams& p) {
  p.validate();
  require((xp.array() >= 0.f).all(), Errc::invalid_argument, "inverse_tonemap: negative input");
  ImageF out(xp.height(), xp.width(), xp.channels());
  out.array() = inverse_tonemap_expr(xp.array(), p);
  return out;
}

HdrPanorama inverse_tonemap(const ImageF& xp, const ToneMapParams& p) {
  return HdrPanorama(inverse_tonemap_image(xp, p));
}

double compute_alpha(std::span<const float> population) {
  require(!population.empty(), Errc::invalid_argument, "compute_alpha: empty population");
  std::vector<float> v(population.begin(), population.end());
  for (float x : v)
    require(std::isfinite(x) && x >= 0.f, Errc::invalid_argument,
            "compute_alpha: population must be finite and nonnegative");
  // Lower-middle / upper-middle average for even sizes.
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + mid, v.end());
  double median = v[mid];
  if (v.size() % 2 == 0) {
    const float lower = *std::max_element(v.begin(), v.begin() + mid);
    median = 0.5 * (double(lower) + median);
  }
  if (!(median > 0)) fail(Errc::degenerate_median, "degenerate median");
  return 0.5 / median;
}

HdrPanorama psi(const ImageF& raw, const ToneMapParams& p) {
  require_panorama_shape(raw);
  p.validate();
  ImageF out(raw.height(), raw.width(), 3);
  out.array() = inverse_tonemap_expr(raw.array().max(0.f), p);
  return HdrPanorama(std::move(out));
}

LdrPanorama phi(const ImageF& raw) {
  require_panorama_shape(raw);
  ImageF out(raw.height(), raw.width(), 3);
  out.array() = raw.array().max(0.f).min(1.f);
  return LdrPanorama(std::move(out));
}

}  // namespace panolight::pano
