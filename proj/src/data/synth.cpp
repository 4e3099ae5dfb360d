#include "panolight/data/synth.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "panolight/core/rng.hpp"
#include "panolight/pano/sphere.hpp"

namespace panolight::data {
namespace {

constexpr double kPi = std::numbers::pi;
constexpr int kSupersample = 4;
constexpr int kShadingWaves = 6;

struct Wave {
  Eigen::Vector3d axis;
  double frequency;
  double phase;
  double amplitude;
};

std::vector<Wave> shading_waves(std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0x5ad1));
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  std::vector<Wave> waves;
  double power = 0;
  for (int k = 0; k < kShadingWaves; ++k) {
    Eigen::Vector3d axis(normal(rng), normal(rng), normal(rng));
    axis.normalize();
    const double amplitude = 0.5 + uniform(rng);
    waves.push_back({axis, 1.0 + 2.0 * uniform(rng), 2 * kPi * uniform(rng), amplitude});
    power += 0.5 * amplitude * amplitude;
  }
  // Unit variance for random phases.
  for (auto& w : waves) w.amplitude /= std::sqrt(power);
  return waves;
}

double shading_field(const std::vector<Wave>& waves, const Eigen::Vector3d& d) {
  double f = 0;
  for (const auto& w : waves) f += w.amplitude * std::cos(w.frequency * w.axis.dot(d) + w.phase);
  return f;
}

}  // namespace

void SceneSpec::validate() const {
  require((ambient >= 0).all() && ambient.allFinite(), Errc::invalid_argument,
          "scene ambient must be nonnegative");
  require(wall_texture_scale >= 0, Errc::invalid_argument, "wall_texture_scale must be >= 0");
  for (const auto& l : lights) {
    require(std::abs(l.direction.norm() - 1.0) < 1e-6, Errc::invalid_argument,
            "light direction must be a unit vector");
    require(l.angular_radius > 0 && l.angular_radius <= kPi / 4, Errc::invalid_argument,
            "light angular radius must be in (0, pi/4]");
    require((l.intensity > 0).all() && l.intensity.allFinite(), Errc::invalid_argument,
            "light intensity must be positive");
  }
}

double light_profile(double theta, double radius) {
  const double inner = 0.75 * radius;
  const double outer = 1.25 * radius;
  if (theta <= inner) return 1.0;
  if (theta >= outer) return 0.0;
  const double t = (theta - inner) / (outer - inner);
  return 1.0 - t * t * (3.0 - 2.0 * t);
}

SynthResult synth_pano(const SceneSpec& spec, int height, int width) {
  spec.validate();
  require(height >= 1 && width == 2 * height, Errc::shape_mismatch, "synth_pano: need W = 2H");
  const auto waves = shading_waves(spec.seed);
  Rng grain_rng(derive_seed(spec.seed, 0x97a1));
  std::normal_distribution<double> normal;

  ImageF img(height, width, 3);
  const double texture = spec.wall_texture_scale;
  for (int i = 0; i < height; ++i) {
    for (int j = 0; j < width; ++j) {
      const Eigen::Vector3d center = pano::pixel_center_direction(i, j, height, width);
      // Brighter ceiling, darker floor, smooth random variation, fine grain.
      const double grain = normal(grain_rng);
      double shade = 1.0 + texture * (0.25 * shading_field(waves, center) + 0.15 * center.z() +
                                      0.08 * grain);
      shade = std::max(shade, 0.05);
      Eigen::Array3d radiance = spec.ambient * shade;

      if (!spec.lights.empty()) {
        Eigen::Array3d light_sum = Eigen::Array3d::Zero();
        for (int a = 0; a < kSupersample; ++a) {
          for (int b = 0; b < kSupersample; ++b) {
            const Eigen::Vector3d d = pano::pixel_to_direction<double>(
                j + (b + 0.5) / kSupersample, i + (a + 0.5) / kSupersample, height, width);
            for (const auto& l : spec.lights) {
              const double theta = std::acos(std::clamp(d.dot(l.direction), -1.0, 1.0));
              const double p = light_profile(theta, l.angular_radius);
              if (p > 0) light_sum += p * l.intensity;
            }
          }
        }
        radiance += light_sum / double(kSupersample * kSupersample);
      }
      for (int c = 0; c < 3; ++c) img(c, i, j) = float(radiance[c]);
    }
  }
  return {pano::HdrPanorama(std::move(img)), spec.lights};
}

SceneSpec random_scene(std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0x5ce7e));
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  SceneSpec spec;
  spec.seed = seed;
  const int n_lights = 1 + int(uniform(rng) * 3.0);
  for (int k = 0; k < n_lights; ++k) {
    Light l;
    const double longitude = -kPi + 2 * kPi * uniform(rng);
    // Ceiling fixtures most of the time, otherwise window-height sources.
    const double colatitude = uniform(rng) < 0.7 ? kPi * (0.12 + 0.30 * uniform(rng))
                                                 : kPi * (0.40 + 0.14 * uniform(rng));
    l.direction = pano::spherical_to_direction(longitude, colatitude);
    l.angular_radius = 0.12 + 0.18 * uniform(rng);
    const double strength = 15.0 + 65.0 * uniform(rng);
    const bool warm = uniform(rng) < 0.5;
    const double t1 = 0.85 + 0.15 * uniform(rng);
    const double t2 = 0.70 + 0.30 * uniform(rng);
    l.intensity = warm ? Eigen::Array3d(1.0, t1, t2) : Eigen::Array3d(t2, t1, 1.0);
    l.intensity *= strength;
    spec.lights.push_back(l);
  }
  const double base = 0.08 + 0.22 * uniform(rng);
  spec.ambient = base * Eigen::Array3d(0.9 + 0.2 * uniform(rng), 0.9 + 0.2 * uniform(rng),
                                       0.9 + 0.2 * uniform(rng));
  spec.wall_texture_scale = 0.3 + 0.5 * uniform(rng);
  return spec;
}

namespace {

// Row-stochastic matrix mapping n_in samples onto n_out by area overlap.
Eigen::MatrixXf area_weights(int n_out, int n_in) {
  Eigen::MatrixXf m = Eigen::MatrixXf::Zero(n_out, n_in);
  const double scale = double(n_in) / n_out;
  for (int o = 0; o < n_out; ++o) {
    const double lo = o * scale;
    const double hi = (o + 1) * scale;
    for (int i = int(std::floor(lo)); i < std::min(n_in, int(std::ceil(hi))); ++i) {
      const double overlap = std::min(hi, i + 1.0) - std::max(lo, double(i));
      if (overlap > 0) m(o, i) = float(overlap / scale);
    }
  }
  return m;
}

}  // namespace

ImageF resize_area(const ImageF& image, int height, int width) {
  require(height >= 1 && width >= 1, Errc::invalid_argument, "resize_area: bad target size");
  if (image.height() == height && image.width() == width) return image;
  const Eigen::MatrixXf ry = area_weights(height, image.height());
  const Eigen::MatrixXf rx = area_weights(width, image.width());
  ImageF out(height, width, image.channels());
  for (int c = 0; c < image.channels(); ++c)
    out.plane(c).matrix().noalias() = ry * image.plane(c).matrix() * rx.transpose();
  return out;
}

}  // namespace panolight::data
