#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/Geometry>

#include <doctest.h>

#include "panolight/data/synth.hpp"
#include "panolight/eval/metrics.hpp"
#include "panolight/pano/sphere.hpp"

using namespace panolight;
using namespace panolight::eval;

namespace {

pano::HdrPanorama uniform_env(int h, float value) {
  return pano::HdrPanorama(ImageF(h, 2 * h, 3, value));
}

pano::HdrPanorama smooth_env(int h) {
  ImageF img(h, 2 * h, 3);
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < 2 * h; ++j) {
      const auto d = pano::pixel_center_direction(i, j, h, 2 * h);
      img(0, i, j) = float(1.5 + d.x() + 0.5 * d.z());
      img(1, i, j) = float(1.2 + 0.7 * d.y());
      img(2, i, j) = float(1.0 + 0.3 * d.x() * d.y() + 0.4 * d.z());
    }
  return pano::HdrPanorama(img);
}

pano::HdrPanorama roll_columns(const pano::HdrPanorama& env, int k) {
  const ImageF& src = env.pixels();
  ImageF out(src.height(), src.width(), 3);
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < src.height(); ++i)
      for (int j = 0; j < src.width(); ++j) out(c, i, (j + k) % src.width()) = src(c, i, j);
  return pano::HdrPanorama(out);
}

double brute_force_si_rmse(const ImageD& pred, const ImageD& gt, const Mask& fg) {
  double best = rmse(pred, gt, fg);
  for (int k = 0; k <= 60000; ++k) {
    const double s = std::pow(10.0, -3.0 + 6.0 * k / 60000.0);
    ImageD scaled = pred;
    scaled.array() *= s;
    best = std::min(best, rmse(scaled, gt, fg));
  }
  return best;
}

Errc error_code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return Errc::invalid_argument;
}

}  // namespace

TEST_CASE("uniform environment renders constant spheres") {
  for (Material m : kAllMaterials) {
    SphereRenderSpec spec;
    spec.material = m;
    spec.image_size = 64;
    const SphereImage s = render_sphere(uniform_env(64, 2.5f), spec);
    REQUIRE(s.foreground.count() > 0);
    for (int c = 0; c < 3; ++c)
      for (int i = 0; i < 64; ++i)
        for (int j = 0; j < 64; ++j) {
          if (s.foreground(i, j))
            CHECK(std::abs(s.image(c, i, j) - 2.5) < 0.025);
          else
            CHECK(s.image(c, i, j) == 0.0);
        }
  }
}

TEST_CASE("sphere coverage and silhouette") {
  SphereRenderSpec spec;
  spec.image_size = 128;
  const SphereImage s = render_sphere(uniform_env(32, 1.f), spec);
  const double expected = std::numbers::pi * 0.45 * 0.45 * 128 * 128;
  CHECK(std::abs(double(s.foreground.count()) - expected) / expected < 0.02);
  CHECK(!s.foreground(0, 0));
  CHECK(s.foreground(64, 64));
}

TEST_CASE("view-facing normal at the image centre") {
  SphereRenderSpec spec;
  spec.image_size = 64;
  const ViewFrame frame = ViewFrame::from(spec.view);
  Eigen::Vector3d n;
  REQUIRE(sphere_normal(spec, frame, 32, 32, n));
  CHECK(n.dot(frame.forward) < -0.999);
  REQUIRE(sphere_normal(spec, frame, 5, 32, n));
  CHECK(n.z() > 0.8);
}

TEST_CASE("mirror highlight lands on the predicted pixel") {
  const int H = 64, W = 128, S = 128;
  SphereRenderSpec spec;
  spec.material = Material::mirror;
  spec.image_size = S;
  const ViewFrame frame = ViewFrame::from(spec.view);
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> row(4, H - 5), col(0, W - 1);
  int tested = 0;
  while (tested < 50) {
    const int i = row(rng), j = col(rng);
    const Eigen::Vector3d d = pano::pixel_center_direction(i, j, H, W);
    const Eigen::Vector3d n = (d - frame.forward).normalized();
    if (n.dot(frame.forward) > -0.3) continue;
    ImageF img(H, W, 3, 0.f);
    for (int c = 0; c < 3; ++c) img(c, i, j) = 100.f;
    const SphereImage s = render_sphere(pano::HdrPanorama(img), spec);
    const double col_pred = (n.dot(frame.right) * spec.coverage + 1) / 2 * S - 0.5;
    const double row_pred = (1 - n.dot(frame.up) * spec.coverage) / 2 * S - 0.5;
    // Intensity-weighted centroid of the highlight.
    double mass = 0, rc = 0, cc = 0;
    for (int y = 0; y < S; ++y)
      for (int x = 0; x < S; ++x) {
        const double v = s.image(0, y, x);
        mass += v;
        rc += v * y;
        cc += v * x;
      }
    REQUIRE(mass > 0);
    CHECK(std::hypot(rc / mass - row_pred, cc / mass - col_pred) <= 1.0);
    ++tested;
  }
}

TEST_CASE("rendering is linear in the environment") {
  data::SceneSpec scene;
  scene.seed = 3;
  data::Light l;
  l.direction = Eigen::Vector3d(0.6, 0.3, 0.5).normalized();
  l.angular_radius = 0.2;
  l.intensity = {20, 15, 10};
  scene.lights = {l};
  const auto env = data::synth_pano(scene, 32, 64).pano;
  // Scaling by 2 is exact in floating point; scaling by 3 rounds once in float.
  ImageF twice = env.pixels(), thrice = env.pixels();
  twice.array() *= 2.f;
  thrice.array() *= 3.f;
  for (Material m : kAllMaterials) {
    SphereRenderSpec spec;
    spec.material = m;
    spec.image_size = 32;
    const SphereImage a = render_sphere(env, spec);
    const SphereImage b = render_sphere(pano::HdrPanorama(twice), spec);
    const SphereImage c = render_sphere(pano::HdrPanorama(thrice), spec);
    CHECK((b.image.array() == 2.0 * a.image.array()).all());
    const double tol = 1e-6 * a.image.array().abs().maxCoeff();
    CHECK(((c.image.array() - 3.0 * a.image.array()).abs() <= tol).all());
  }
}

TEST_CASE("diffuse render is equivariant to rotation about the vertical") {
  const int H = 32;
  const auto env = smooth_env(H);
  for (int k : {5, 16, 41}) {
    const double angle = 2 * std::numbers::pi * k / (2 * H);
    SphereRenderSpec base;
    base.material = Material::diffuse;
    base.image_size = 32;
    base.view = Eigen::Vector3d(1, 0.2, -0.1);
    SphereRenderSpec rotated = base;
    rotated.view = Eigen::AngleAxisd(angle, Eigen::Vector3d::UnitZ()) * base.view;
    const SphereImage a = render_sphere(env, base);
    const SphereImage b = render_sphere(roll_columns(env, k), rotated);
    CHECK((a.foreground == b.foreground).all());
    const double rel = (a.image.array() - b.image.array()).abs().maxCoeff() /
                       a.image.array().abs().maxCoeff();
    CHECK(rel < 0.02);
  }
}

TEST_CASE("diffuse sphere matches the analytic irradiance of a linear environment") {
  // L(w) = 1 + a.w has irradiance/pi = 1 + (2/3) a.n.
  const int H = 64;
  const Eigen::Vector3d a(0.3, -0.2, 0.4);
  ImageF img(H, 2 * H, 3);
  for (int i = 0; i < H; ++i)
    for (int j = 0; j < 2 * H; ++j)
      for (int c = 0; c < 3; ++c)
        img(c, i, j) = float(1.0 + a.dot(pano::pixel_center_direction(i, j, H, 2 * H)));
  SphereRenderSpec spec;
  spec.material = Material::diffuse;
  spec.image_size = 32;
  const ViewFrame frame = ViewFrame::from(spec.view);
  const SphereImage s = render_sphere(pano::HdrPanorama(img), spec);
  for (int i = 0; i < 32; ++i)
    for (int j = 0; j < 32; ++j) {
      Eigen::Vector3d n;
      if (!sphere_normal(spec, frame, i, j, n)) continue;
      CHECK(std::abs(s.image(1, i, j) - (1.0 + 2.0 / 3.0 * a.dot(n))) < 0.01);
    }
}

TEST_CASE("render spec validation") {
  SphereRenderSpec spec;
  spec.image_size = 4;
  CHECK(error_code_of([&] { render_sphere(uniform_env(16, 1.f), spec); }) == Errc::invalid_argument);
  spec = {};
  spec.mirror_samples = 0;
  CHECK(error_code_of([&] { spec.validate(); }) == Errc::invalid_argument);
  spec = {};
  spec.view = Eigen::Vector3d(0, 0, 1);
  CHECK(error_code_of([&] { spec.validate(); }) == Errc::invalid_argument);
  CHECK(material_from_string("matte_silver") == Material::matte_silver);
  CHECK(error_code_of([] { material_from_string("chrome"); }) == Errc::invalid_argument);
}

TEST_CASE("rmse fixtures") {
  Mask fg = Mask::Constant(4, 4, true);
  ImageD gt(4, 4, 3, 0.5);
  CHECK(rmse(gt, gt, fg) == 0.0);
  ImageD off = gt;
  off.array() += 1.0;
  CHECK(rmse(off, gt, fg) == doctest::Approx(1.0).epsilon(1e-15));

  // Checkerboard: |diff| is 1 on 8 of 16 pixels and 0 elsewhere.
  ImageD checker(4, 4, 3, 0.0), zero(4, 4, 3, 0.0);
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) checker(c, i, j) = (i + j) % 2;
  CHECK(rmse(checker, zero, fg) == doctest::Approx(std::sqrt(0.5)));
  fg(0, 0) = false;
  fg(1, 1) = false;
  CHECK(rmse(checker, zero, fg) == doctest::Approx(std::sqrt(8.0 / 14.0)));
}

TEST_CASE("si_rmse properties") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.05, 3.0);
  Mask fg = Mask::Constant(4, 4, true);
  fg(3, 0) = false;
  for (int fixture = 0; fixture < 20; ++fixture) {
    ImageD pred(4, 4, 3), gt(4, 4, 3);
    for (auto& v : pred.array().reshaped()) v = u(rng);
    for (auto& v : gt.array().reshaped()) v = u(rng);
    const double direct = si_rmse(pred, gt, fg);
    for (double c : {1e-3, 0.37, 8.0, 2e3}) {
      ImageD scaled = pred;
      scaled.array() *= c;
      CHECK(std::abs(si_rmse(scaled, gt, fg) - direct) < 1e-10);
    }
    ImageD exact = gt;
    exact.array() *= 4.2;
    CHECK(si_rmse(exact, gt, fg) < 1e-10);
    const double brute = brute_force_si_rmse(pred, gt, fg);
    CHECK(direct <= brute + 1e-12);
    CHECK(brute - direct < 1e-6);
  }
  ImageD zero(4, 4, 3, 0.0), gt(4, 4, 3, 1.0);
  CHECK(si_rmse(zero, gt, fg) == rmse(zero, gt, fg));
}

TEST_CASE("angular error anchors") {
  Mask fg = Mask::Constant(2, 2, true);
  ImageD red(2, 2, 3, 0.0), green(2, 2, 3, 0.0);
  red.plane(0).setConstant(1.0);
  green.plane(1).setConstant(1.0);
  CHECK(angular_error_deg(red, red, fg) == doctest::Approx(0.0));
  CHECK(angular_error_deg(red, green, fg) == doctest::Approx(90.0));

  ImageD gt(2, 2, 3), scaled(2, 2, 3);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.1, 1.0);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) {
      const double k = 0.5 + 3 * u(rng);
      for (int c = 0; c < 3; ++c) {
        gt(c, i, j) = u(rng);
        scaled(c, i, j) = k * gt(c, i, j);
      }
    }
  CHECK(angular_error_deg(scaled, gt, fg) < 1e-6);

  // Black pixels are skipped; an all-black foreground is an error.
  ImageD half = red;
  for (int c = 0; c < 3; ++c) half(c, 0, 0) = 0.0;
  CHECK(angular_error_deg(half, green, fg) == doctest::Approx(90.0));
  ImageD black(2, 2, 3, 0.0);
  CHECK(error_code_of([&] { angular_error_deg(black, gt, fg); }) == Errc::all_pixels_skipped);
}

TEST_CASE("metrics ignore the background") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.1, 2.0);
  Mask fg = Mask::Constant(6, 6, false);
  fg.block(1, 1, 4, 4).setConstant(true);
  ImageD pred(6, 6, 3), gt(6, 6, 3);
  for (auto& v : pred.array().reshaped()) v = u(rng);
  for (auto& v : gt.array().reshaped()) v = u(rng);
  ImageD pred2 = pred, gt2 = gt;
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < 6; ++i)
      for (int j = 0; j < 6; ++j)
        if (!fg(i, j)) {
          pred2(c, i, j) = 50 * u(rng);
          gt2(c, i, j) = -7 * u(rng);
        }
  CHECK(rmse(pred, gt, fg) == rmse(pred2, gt2, fg));
  CHECK(si_rmse(pred, gt, fg) == si_rmse(pred2, gt2, fg));
  CHECK(angular_error_deg(pred, gt, fg) == angular_error_deg(pred2, gt2, fg));
}

TEST_CASE("metric input errors") {
  ImageD a(4, 4, 3, 1.0), b(4, 5, 3, 1.0);
  Mask fg = Mask::Constant(4, 4, true);
  CHECK(error_code_of([&] { rmse(a, b, fg); }) == Errc::shape_mismatch);
  Mask none = Mask::Constant(4, 4, false);
  CHECK(error_code_of([&] { rmse(a, a, none); }) == Errc::empty_foreground);
  CHECK(error_code_of([&] { si_rmse(a, a, none); }) == Errc::empty_foreground);
}

TEST_CASE("evaluate report") {
  std::vector<pano::HdrPanorama> gt;
  for (std::uint64_t seed : {1, 2}) {
    data::SceneSpec scene;
    scene.seed = seed;
    scene.ambient = {0.3, 0.25, 0.2};
    data::Light l;
    l.direction = Eigen::Vector3d(0.5, 0.4 * double(seed), 0.6).normalized();
    l.angular_radius = 0.25;
    l.intensity = {8, 6, 5};
    scene.lights = {l};
    gt.push_back(data::synth_pano(scene, 32, 64).pano);
  }
  EvalOptions options;
  options.render.image_size = 32;
  const MetricsReport same = evaluate(gt, gt, options);
  REQUIRE(same.images.size() == 2);
  for (Material m : kAllMaterials) {
    CHECK(same.mean.at(m).rmse < 1e-6);
    CHECK(same.mean.at(m).si_rmse < 1e-6);
    CHECK(same.mean.at(m).angular_error_deg < 1e-3);
  }

  std::vector<pano::HdrPanorama> doubled;
  for (const auto& p : gt) {
    ImageF img = p.pixels();
    img.array() *= 2.f;
    doubled.emplace_back(img);
  }
  const MetricsReport twice = evaluate(doubled, gt, options);
  for (Material m : kAllMaterials) {
    CHECK(twice.mean.at(m).rmse > 0.01);
    CHECK(twice.mean.at(m).si_rmse < 1e-6);
    CHECK(twice.mean.at(m).angular_error_deg < 1e-3);
  }
  const auto j = to_json(twice);
  CHECK(j["count"] == 2);
  CHECK(j["images"][1]["name"] == "1");
  CHECK(j["mean"]["diffuse"]["si_rmse"].get<double>() < 1e-6);

  CHECK(error_code_of([&] {
          evaluate(std::span(gt).first(1), std::span<const pano::HdrPanorama>(gt), options);
        }) == Errc::length_mismatch);
}
