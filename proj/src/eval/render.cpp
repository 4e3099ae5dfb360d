#include "panolight/eval/render.hpp"

#include <cmath>
#include <numbers>

#include <Eigen/Geometry>

#include "panolight/pano/sphere.hpp"

namespace panolight::eval {

const char* to_string(Material m) {
  switch (m) {
    case Material::mirror: return "mirror";
    case Material::matte_silver: return "matte_silver";
    case Material::diffuse: return "diffuse";
  }
  return "unknown";
}

Material material_from_string(const std::string& name) {
  for (Material m : kAllMaterials)
    if (name == to_string(m)) return m;
  fail(Errc::invalid_argument, "unknown material '" + name + "'");
}

void SphereRenderSpec::validate() const {
  require(image_size >= 16, Errc::invalid_argument, "sphere image_size must be >= 16");
  require(glossy_exponent > 0, Errc::invalid_argument, "glossy_exponent must be > 0");
  require(coverage > 0 && coverage <= 1, Errc::invalid_argument, "coverage must lie in (0, 1]");
  require(mirror_samples >= 1, Errc::invalid_argument, "mirror_samples must be >= 1");
  require(view.allFinite() && view.norm() > 0, Errc::invalid_argument, "view must be nonzero");
  require(std::abs(view.normalized().z()) < 0.999, Errc::invalid_argument,
          "view must not be vertical");
  require((albedo >= 0).all(), Errc::invalid_argument, "albedo must be nonnegative");
}

ViewFrame ViewFrame::from(const Eigen::Vector3d& view) {
  ViewFrame f;
  f.forward = view.normalized();
  f.right = f.forward.cross(Eigen::Vector3d::UnitZ()).normalized();
  f.up = f.right.cross(f.forward);
  return f;
}

bool sphere_normal(const SphereRenderSpec& spec, const ViewFrame& frame, int row, int col,
                   Eigen::Vector3d& normal) {
  const double s = spec.image_size;
  const double px = ((col + 0.5) / s * 2.0 - 1.0) / spec.coverage;
  const double py = (1.0 - (row + 0.5) / s * 2.0) / spec.coverage;
  const double r2 = px * px + py * py;
  if (r2 >= 1.0) return false;
  normal = px * frame.right + py * frame.up - std::sqrt(1.0 - r2) * frame.forward;
  return true;
}

namespace {

// Integrates env against a per-direction lobe for a block of sphere pixels.
// lobe(axis . w) gives the unnormalized weight.
template <typename Lobe>
void integrate_lobes(const Eigen::MatrixXd& axes, const Eigen::MatrixXd& dirs,
                     const Eigen::MatrixXd& radiance_dw, const Eigen::VectorXd& dw, Lobe lobe,
                     bool normalize, Eigen::MatrixXd& out) {
  constexpr Eigen::Index kBlock = 256;
  out.resize(axes.rows(), 3);
  for (Eigen::Index b = 0; b < axes.rows(); b += kBlock) {
    const Eigen::Index n = std::min(kBlock, axes.rows() - b);
    Eigen::MatrixXd w = (axes.middleRows(b, n) * dirs).unaryExpr(lobe);
    out.middleRows(b, n).noalias() = w * radiance_dw;
    if (normalize) {
      const Eigen::VectorXd mass = w * dw;
      for (Eigen::Index i = 0; i < n; ++i)
        out.row(b + i) /= mass[i] > 0 ? mass[i] : 1.0;
    }
  }
}

}  // namespace

SphereImage render_sphere(const pano::HdrPanorama& env, const SphereRenderSpec& spec) {
  spec.validate();
  const int S = spec.image_size;
  const ViewFrame frame = ViewFrame::from(spec.view);
  SphereImage out{ImageD(S, S, 3, 0.0), Mask::Constant(S, S, false)};

  std::vector<std::pair<int, int>> pixels;
  std::vector<Eigen::Vector3d> normals;
  for (int i = 0; i < S; ++i)
    for (int j = 0; j < S; ++j) {
      Eigen::Vector3d n;
      if (sphere_normal(spec, frame, i, j, n)) {
        out.foreground(i, j) = true;
        pixels.emplace_back(i, j);
        normals.push_back(n);
      }
    }
  const ImageF& img = env.pixels();
  const Eigen::Index F = Eigen::Index(pixels.size());

  if (spec.material == Material::mirror) {
    const int m = spec.mirror_samples;
    auto reflect = [&](const Eigen::Vector3d& n) {
      return pano::sample_direction(img, frame.forward - 2.0 * frame.forward.dot(n) * n);
    };
    for (Eigen::Index k = 0; k < F; ++k) {
      const auto [row, col] = pixels[std::size_t(k)];
      Eigen::Vector3d acc = Eigen::Vector3d::Zero();
      int hits = 0;
      for (int a = 0; a < m; ++a)
        for (int b = 0; b < m; ++b) {
          const double px = ((col + (b + 0.5) / m) / S * 2.0 - 1.0) / spec.coverage;
          const double py = (1.0 - (row + (a + 0.5) / m) / S * 2.0) / spec.coverage;
          const double r2 = px * px + py * py;
          if (r2 >= 1.0) continue;
          acc += reflect(px * frame.right + py * frame.up - std::sqrt(1.0 - r2) * frame.forward);
          ++hits;
        }
      if (hits == 0) acc = reflect(normals[std::size_t(k)]), hits = 1;
      for (int ch = 0; ch < 3; ++ch) out.image(ch, row, col) = spec.albedo[ch] * acc[ch] / hits;
    }
    return out;
  }

  const int H = env.height(), W = env.width();
  const Eigen::ArrayXXd omega = pano::solid_angle_weights(H, W);
  Eigen::MatrixXd dirs(3, Eigen::Index(H) * W);
  Eigen::VectorXd dw(Eigen::Index(H) * W);
  Eigen::MatrixXd radiance_dw(Eigen::Index(H) * W, 3);
  for (int i = 0; i < H; ++i)
    for (int j = 0; j < W; ++j) {
      const Eigen::Index p = Eigen::Index(i) * W + j;
      dirs.col(p) = pano::pixel_center_direction<double>(i, j, H, W);
      dw[p] = omega(i, j);
      for (int ch = 0; ch < 3; ++ch) radiance_dw(p, ch) = double(img(ch, i, j)) * omega(i, j);
    }

  Eigen::MatrixXd axes(F, 3);
  for (Eigen::Index k = 0; k < F; ++k) {
    const Eigen::Vector3d& n = normals[std::size_t(k)];
    const Eigen::Vector3d axis =
        spec.material == Material::diffuse ? n : Eigen::Vector3d(frame.forward - 2.0 * frame.forward.dot(n) * n);
    axes.row(k) = axis.transpose();
  }
  Eigen::MatrixXd result;
  if (spec.material == Material::diffuse) {
    integrate_lobes(axes, dirs, radiance_dw, dw, [](double c) { return c > 0 ? c : 0.0; }, false,
                    result);
    result /= std::numbers::pi;
  } else {
    const double e = spec.glossy_exponent;
    integrate_lobes(axes, dirs, radiance_dw, dw, [e](double c) { return c > 0 ? std::pow(c, e) : 0.0; },
                    true, result);
  }
  for (Eigen::Index k = 0; k < F; ++k)
    for (int ch = 0; ch < 3; ++ch)
      out.image(ch, pixels[std::size_t(k)].first, pixels[std::size_t(k)].second) =
          spec.albedo[ch] * result(k, ch);
  return out;
}

}  // namespace panolight::eval
