#include "panolight/pano/sphere.hpp"

#include <sstream>

namespace panolight::pano {

Eigen::ArrayXXd solid_angle_weights(int height, int width) {
  require(height >= 1 && width == 2 * height, Errc::shape_mismatch,
          "solid_angle_weights: need W = 2H >= 2");
  const double pi = std::numbers::pi;
  const double cell = (2 * pi / width) * (pi / height);
  Eigen::ArrayXXd w(height, width);
  for (int r = 0; r < height; ++r) w.row(r).setConstant(cell * std::sin(pi * (r + 0.5) / height));
  return w;
}

double solid_angle_quadrature_error(const Eigen::ArrayXXd& weights) {
  const double full = 4 * std::numbers::pi;
  return std::abs(weights.sum() - full) / full;
}

void check_solid_angle_quadrature(const Eigen::ArrayXXd& weights, double rel_tol) {
  const double err = solid_angle_quadrature_error(weights);
  if (err > rel_tol) {
    std::ostringstream msg;
    msg << "solid angle sum misses 4*pi by " << err << " (tolerance " << rel_tol << ")";
    fail(Errc::quadrature_tolerance, msg.str());
  }
}

}  // namespace panolight::pano
