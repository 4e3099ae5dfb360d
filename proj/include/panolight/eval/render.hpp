#pragma once

#include <string>

#include <Eigen/Core>

#include "panolight/core/image.hpp"
#include "panolight/pano/panorama.hpp"

namespace panolight::eval {

enum class Material { mirror, matte_silver, diffuse };

const char* to_string(Material m);
Material material_from_string(const std::string& name);
inline constexpr Material kAllMaterials[] = {Material::mirror, Material::matte_silver,
                                             Material::diffuse};

/// Orthographic unit sphere probe. The camera looks along `view` with +z
/// projected as up; the sphere's silhouette spans `coverage` of the frame.
struct SphereRenderSpec {
  Material material = Material::diffuse;
  int image_size = 128;
  Eigen::Vector3d view{1.0, 0.0, 0.0};
  double glossy_exponent = 32.0;
  Eigen::Array3d albedo{1.0, 1.0, 1.0};
  double coverage = 0.9;
  /// Mirror rays per pixel along each axis; sub-samples off the sphere are dropped.
  int mirror_samples = 8;

  void validate() const;
};

struct SphereImage {
  ImageD image;        // 3 x S x S linear radiance, 0 on background
  Mask foreground;     // S x S, true on the sphere
};

/// Camera basis (forward, right, up) for a view direction.
struct ViewFrame {
  Eigen::Vector3d forward, right, up;
  static ViewFrame from(const Eigen::Vector3d& view);
};

/// Outward normal at pixel (row, col); false off the sphere.
bool sphere_normal(const SphereRenderSpec& spec, const ViewFrame& frame, int row, int col,
                   Eigen::Vector3d& normal);

/// Mirror: env at the reflected view ray. Diffuse: sum env max(0, n.w) dw / pi.
/// Matte silver: normalized Phong lobe about the reflected ray. Linear in env.
SphereImage render_sphere(const pano::HdrPanorama& env, const SphereRenderSpec& spec);

}  // namespace panolight::eval
