#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "panolight/pano/panorama.hpp"

namespace panolight::data {

struct Light {
  Eigen::Vector3d direction;    // unit
  double angular_radius = 0.1;  // radians, (0, pi/4]
  Eigen::Array3d intensity{1, 1, 1};
};

/// Procedural indoor scene: discrete disc lights over an ambient room whose
/// shading varies smoothly with direction plus a fine per-pixel grain. Both
/// shading terms scale with `wall_texture_scale`; 0 gives a constant ambient.
struct SceneSpec {
  std::uint64_t seed = 0;
  std::vector<Light> lights;
  Eigen::Array3d ambient{0.2, 0.2, 0.2};
  double wall_texture_scale = 0.0;

  void validate() const;
};

struct SynthResult {
  pano::HdrPanorama pano;
  std::vector<Light> lights;
};

/// Renders the scene at H x W with 4x4 supersampling per pixel. Each light is
/// a disc of radiance `intensity` whose edge falls off smoothly across
/// [0.75 r, 1.25 r]; overlapping lights add.
SynthResult synth_pano(const SceneSpec& spec, int height, int width);

/// Draws a plausible indoor scene (1-3 lights, mostly above the horizon) from a seed.
SceneSpec random_scene(std::uint64_t seed);

/// Radiance profile of one light at angular distance `theta` from its center,
/// normalized to 1 inside the plateau.
double light_profile(double theta, double radius);

/// Area-averaging resize (radiance preserving). Requires integer-free
/// arbitrary ratios; each output pixel averages the overlapped input area.
ImageF resize_area(const ImageF& image, int height, int width);

}  // namespace panolight::data
