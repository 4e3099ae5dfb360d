#pragma once

#include <span>

#include <Eigen/Core>

#include "panolight/core/image.hpp"
#include "panolight/pano/panorama.hpp"

namespace panolight::pano {

/// Gamma-scale tone curve x' = alpha * x^(1/gamma) and its inverse.
struct ToneMapParams {
  double alpha = 0.5;
  double gamma = 2.4;

  void validate() const;
  bool operator==(const ToneMapParams&) const = default;
};

// Expression-level forms. Callers are responsible for the domain (x >= 0).

template <typename Derived>
auto tonemap_expr(const Eigen::ArrayBase<Derived>& x, const ToneMapParams& p) {
  using Scalar = typename Derived::Scalar;
  return Scalar(p.alpha) * x.pow(Scalar(1.0 / p.gamma));
}

template <typename Derived>
auto inverse_tonemap_expr(const Eigen::ArrayBase<Derived>& xp, const ToneMapParams& p) {
  using Scalar = typename Derived::Scalar;
  return (xp / Scalar(p.alpha)).pow(Scalar(p.gamma));
}

/// Forward curve on linear radiance. Rejects negative pixels.
ImageF tonemap(const ImageF& x, const ToneMapParams& p);
ImageF tonemap(const HdrPanorama& x, const ToneMapParams& p);

/// Inverse curve; `xp` must be nonnegative. Result is not shape-checked as a
/// panorama, so it also serves crops.
ImageF inverse_tonemap_image(const ImageF& xp, const ToneMapParams& p);
HdrPanorama inverse_tonemap(const ImageF& xp, const ToneMapParams& p);

/// 0.5 / median(population). Throws degenerate_median if the median is 0.
double compute_alpha(std::span<const float> population);

/// HDR branch output transform: clamp at 0, then inverse tone map.
HdrPanorama psi(const ImageF& raw, const ToneMapParams& p);

/// LDR branch output transform: clamp to [0, 1].
LdrPanorama phi(const ImageF& raw);

}  // namespace panolight::pano
