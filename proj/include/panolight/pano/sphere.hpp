#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Core>

#include "panolight/core/error.hpp"
#include "panolight/core/image.hpp"

/// Equirectangular convention used throughout the library:
///
///  * z is up; longitude phi in [-pi, pi) is measured in the x-y plane from +x
///    toward +y; colatitude theta in [0, pi] is measured from +z.
///  * u (columns) is linear in longitude with u = 0 at phi = -pi and u = W at
///    phi = +pi; v (rows) is linear in colatitude with v = 0 at the north pole.
///  * Pixel (row i, col j) covers [j, j+1) x [i, i+1); its center is
///    (u, v) = (j + 0.5, i + 0.5).
///  * The forward axis +x maps to the image center (W/2, H/2).
namespace panolight::pano {

template <typename Scalar>
using Vec2 = Eigen::Matrix<Scalar, 2, 1>;
template <typename Scalar>
using Vec3 = Eigen::Matrix<Scalar, 3, 1>;

template <typename Scalar>
Vec3<Scalar> spherical_to_direction(Scalar longitude, Scalar colatitude) {
  const Scalar s = std::sin(colatitude);
  return {s * std::cos(longitude), s * std::sin(longitude), std::cos(colatitude)};
}

/// Continuous pixel coordinates (u, v) of a unit direction.
template <typename Scalar>
Vec2<Scalar> direction_to_pixel(const Vec3<Scalar>& d, int height, int width) {
  const Scalar norm = d.norm();
  require(norm > Scalar(0), Errc::invalid_argument, "direction_to_pixel: zero vector");
  const Vec3<Scalar> n = d / norm;
  const Scalar pi = std::numbers::pi_v<Scalar>;
  const Scalar longitude = std::atan2(n.y(), n.x());
  const Scalar colatitude = std::acos(std::clamp(n.z(), Scalar(-1), Scalar(1)));
  Scalar u = (longitude + pi) / (2 * pi) * Scalar(width);
  if (u >= Scalar(width)) u -= Scalar(width);
  return {u, colatitude / pi * Scalar(height)};
}

template <typename Scalar>
Vec3<Scalar> pixel_to_direction(Scalar u, Scalar v, int height, int width) {
  const Scalar pi = std::numbers::pi_v<Scalar>;
  const Scalar longitude = u / Scalar(width) * 2 * pi - pi;
  const Scalar colatitude = v / Scalar(height) * pi;
  return spherical_to_direction(longitude, colatitude);
}

template <typename Scalar = double>
Vec3<Scalar> pixel_center_direction(int row, int col, int height, int width) {
  return pixel_to_direction<Scalar>(Scalar(col) + Scalar(0.5), Scalar(row) + Scalar(0.5),
                                    height, width);
}

/// Per-pixel solid angle (steradians), H x W. Throws shape_mismatch unless
/// W = 2H and H >= 1.
Eigen::ArrayXXd solid_angle_weights(int height, int width);

/// Relative deviation of sum(weights) from 4*pi.
double solid_angle_quadrature_error(const Eigen::ArrayXXd& weights);

/// Throws quadrature_tolerance if the weights miss 4*pi by more than `rel_tol`.
void check_solid_angle_quadrature(const Eigen::ArrayXXd& weights, double rel_tol = 1e-3);

/// Bilinear sample at continuous (u, v); wraps horizontally, clamps vertically.
template <typename Scalar>
Vec3<double> sample_bilinear(const Image<Scalar>& img, double u, double v) {
  const int h = img.height();
  const int w = img.width();
  const double x = u - 0.5;
  const double y = std::clamp(v - 0.5, 0.0, double(h - 1));
  const double x0f = std::floor(x);
  const double y0f = std::floor(y);
  const double fx = x - x0f;
  const double fy = y - y0f;
  auto wrap = [w](long long j) { return int(((j % w) + w) % w); };
  const int x0 = wrap((long long)x0f);
  const int x1 = wrap((long long)x0f + 1);
  const int y0 = int(y0f);
  const int y1 = std::min(y0 + 1, h - 1);
  Vec3<double> out;
  for (int c = 0; c < 3; ++c) {
    const double top = (1 - fx) * img(c, y0, x0) + fx * img(c, y0, x1);
    const double bottom = (1 - fx) * img(c, y1, x0) + fx * img(c, y1, x1);
    out[c] = (1 - fy) * top + fy * bottom;
  }
  return out;
}

template <typename Scalar>
Vec3<double> sample_direction(const Image<Scalar>& img, const Vec3<double>& d) {
  const Vec2<double> uv = direction_to_pixel(d, img.height(), img.width());
  return sample_bilinear(img, uv.x(), uv.y());
}

}  // namespace panolight::pano
