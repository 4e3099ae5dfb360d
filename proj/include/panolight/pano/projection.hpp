#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "panolight/core/image.hpp"
#include "panolight/pano/panorama.hpp"
#include "panolight/pano/sphere.hpp"

namespace panolight::pano {

/// Pinhole camera for limited-field-of-view crops. Yaw is the longitude of the
/// optical axis, pitch its elevation above the horizon (degrees). Image rows run
/// top to bottom; the camera's up vector is the world z axis projected
/// orthogonally to the optical axis.
struct CameraSpec {
  double fov_h = 90.0;
  double fov_v = 67.5;
  double yaw = 0.0;
  double pitch = 0.0;
  int crop_w = 128;
  int crop_h = 86;

  void validate() const;
};

struct CameraFrame {
  Vec3<double> forward;
  Vec3<double> right;
  Vec3<double> up;
  double tan_half_h;
  double tan_half_v;

  static CameraFrame from(const CameraSpec& cam);

  /// World direction through continuous crop coordinates (x right, y down, in pixels).
  Vec3<double> ray(double x, double y, int crop_w, int crop_h) const;
};

/// Perspective crop of an equirectangular image (bilinear).
ImageF crop_from_pano(const ImageF& pano, const CameraSpec& cam);

struct MaskedPanorama {
  LdrPanorama pano;
  Mask visibility;
};

/// Back-projects an LDR crop onto an H x W panorama: pixels inside the frustum
/// are bilinearly sampled from the crop and marked visible, everything else is
/// zero. Throws empty_coverage if no panorama pixel falls inside the frustum.
MaskedPanorama lfov_to_masked_pano(const ImageF& crop, const CameraSpec& cam, int height,
                                   int width);

/// Solid angle of a rectangular pinhole frustum, 4 asin(sin(a) sin(b)).
double frustum_solid_angle(const CameraSpec& cam);

}  // namespace panolight::pano
