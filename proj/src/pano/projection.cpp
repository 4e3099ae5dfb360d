#include "panolight/pano/projection.hpp"

#include <cmath>

namespace panolight::pano {
namespace {

double radians(double deg) { return deg * std::numbers::pi / 180.0; }

}  // namespace

void CameraSpec::validate() const {
  require(fov_h > 0 && fov_h < 180, Errc::invalid_argument, "camera fov_h must be in (0, 180)");
  require(fov_v > 0 && fov_v < 180, Errc::invalid_argument, "camera fov_v must be in (0, 180)");
  require(std::abs(pitch) < 89.0, Errc::invalid_argument, "camera pitch must be in (-89, 89)");
  require(crop_w >= 8 && crop_h >= 8, Errc::invalid_argument, "camera crop must be at least 8x8");
}

CameraFrame CameraFrame::from(const CameraSpec& cam) {
  cam.validate();
  CameraFrame f;
  f.forward = spherical_to_direction(radians(cam.yaw), std::numbers::pi / 2 - radians(cam.pitch));
  f.right = f.forward.cross(Vec3<double>::UnitZ()).normalized();
  f.up = f.right.cross(f.forward);
  f.tan_half_h = std::tan(radians(cam.fov_h) / 2);
  f.tan_half_v = std::tan(radians(cam.fov_v) / 2);
  return f;
}

Vec3<double> CameraFrame::ray(double x, double y, int crop_w, int crop_h) const {
  const double nx = 2.0 * x / crop_w - 1.0;
  const double ny = 1.0 - 2.0 * y / crop_h;
  return (forward + nx * tan_half_h * right + ny * tan_half_v * up).normalized();
}

ImageF crop_from_pano(const ImageF& pano, const CameraSpec& cam) {
  require(pano.channels() == 3, Errc::shape_mismatch, "crop_from_pano: need 3 channels");
  const CameraFrame frame = CameraFrame::from(cam);
  ImageF crop(cam.crop_h, cam.crop_w, 3);
  for (int i = 0; i < cam.crop_h; ++i) {
    for (int j = 0; j < cam.crop_w; ++j) {
      const Vec3<double> rgb =
          sample_direction(pano, frame.ray(j + 0.5, i + 0.5, cam.crop_w, cam.crop_h));
      for (int c = 0; c < 3; ++c) crop(c, i, j) = float(rgb[c]);
    }
  }
  return crop;
}

MaskedPanorama lfov_to_masked_pano(const ImageF& crop, const CameraSpec& cam, int height,
                                   int width) {
  require(crop.channels() == 3 && crop.height() == cam.crop_h && crop.width() == cam.crop_w,
          Errc::shape_mismatch, "lfov_to_masked_pano: crop dimensions do not match camera");
  require((crop.array() >= 0.f).all() && (crop.array() <= 1.f).all(), Errc::invalid_argument,
          "lfov_to_masked_pano: crop must lie in [0, 1]");
  require(height >= 1 && width == 2 * height, Errc::shape_mismatch,
          "lfov_to_masked_pano: need W = 2H");
  const CameraFrame frame = CameraFrame::from(cam);

  ImageF out(height, width, 3);
  Mask visible = Mask::Constant(height, width, false);
  for (int r = 0; r < height; ++r) {
    for (int col = 0; col < width; ++col) {
      const Vec3<double> d = pixel_center_direction(r, col, height, width);
      const double depth = d.dot(frame.forward);
      if (depth <= 0) continue;
      const double nx = d.dot(frame.right) / (depth * frame.tan_half_h);
      const double ny = d.dot(frame.up) / (depth * frame.tan_half_v);
      if (std::abs(nx) > 1.0 || std::abs(ny) > 1.0) continue;
      // Continuous crop coordinates; clamp-to-edge bilinear lookup.
      const double x = std::clamp((nx + 1.0) / 2.0 * cam.crop_w - 0.5, 0.0, cam.crop_w - 1.0);
      const double y = std::clamp((1.0 - ny) / 2.0 * cam.crop_h - 0.5, 0.0, cam.crop_h - 1.0);
      const int x0 = int(x);
      const int y0 = int(y);
      const int x1 = std::min(x0 + 1, cam.crop_w - 1);
      const int y1 = std::min(y0 + 1, cam.crop_h - 1);
      const double fx = x - x0;
      const double fy = y - y0;
      for (int c = 0; c < 3; ++c) {
        const double top = (1 - fx) * crop(c, y0, x0) + fx * crop(c, y0, x1);
        const double bottom = (1 - fx) * crop(c, y1, x0) + fx * crop(c, y1, x1);
        out(c, r, col) = float(std::clamp((1 - fy) * top + fy * bottom, 0.0, 1.0));
      }
      visible(r, col) = true;
    }
  }
  if (!visible.any()) fail(Errc::empty_coverage, "camera frustum covers no panorama pixel");
  return {LdrPanorama(std::move(out)), std::move(visible)};
}

double frustum_solid_angle(const CameraSpec& cam) {
  const double a = radians(cam.fov_h) / 2;
  const double b = radians(cam.fov_v) / 2;
  return 4.0 * std::asin(std::sin(a) * std::sin(b));
}

}  // namespace panolight::pano
