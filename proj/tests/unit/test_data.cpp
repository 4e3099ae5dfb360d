#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

#include <doctest.h>

#include "panolight/core/archive.hpp"
#include "panolight/data/dataset.hpp"
#include "panolight/data/distribution.hpp"
#include "panolight/data/rgbe.hpp"
#include "panolight/data/synth.hpp"
#include "panolight/pano/sphere.hpp"

using namespace panolight;
using namespace panolight::data;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("panolight_test_data_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
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

void write_bytes(const fs::path& p, const std::string& header, const std::vector<unsigned char>& body) {
  std::ofstream out(p, std::ios::binary);
  out << header;
  out.write(reinterpret_cast<const char*>(body.data()), std::streamsize(body.size()));
}

}  // namespace

TEST_CASE("synth_pano constant room") {
  SceneSpec spec;
  spec.ambient = {0.2, 0.2, 0.2};
  spec.wall_texture_scale = 0;
  const auto r = synth_pano(spec, 16, 32);
  CHECK(((r.pano.pixels().array() - 0.2f).abs() < 1e-7f).all());
  CHECK(r.lights.empty());
}

TEST_CASE("synth_pano single light") {
  SceneSpec spec;
  spec.ambient = {0, 0, 0};
  Light l;
  l.direction = pano::pixel_center_direction(20, 70, 64, 128);
  l.angular_radius = 0.1;
  l.intensity = {50, 50, 50};
  spec.lights = {l};
  const auto r = synth_pano(spec, 64, 128);
  const ImageF& img = r.pano.pixels();
  const float mx = img.array().maxCoeff();
  CHECK(mx >= 45.f);
  CHECK(mx <= 50.f);
  CHECK(img(0, 20, 70) == mx);
  CHECK(r.lights.size() == 1);
  CHECK(r.lights[0].direction.isApprox(l.direction));
}

TEST_CASE("synth_pano radiometry") {
  // Disc radius of 5 pixels at 64x128.
  const double radius = 5 * std::numbers::pi / 64;
  const auto weights = pano::solid_angle_weights(64, 128);
  for (const auto& dir : {Eigen::Vector3d(1, 0, 0), Eigen::Vector3d(0.3, -0.5, 0.8).normalized()}) {
    SceneSpec spec;
    spec.ambient = {0, 0, 0};
    spec.lights = {Light{dir, radius, {30, 30, 30}}};
    const ImageF img = synth_pano(spec, 64, 128).pano.pixels();
    const double integral = (weights * img.plane(0).cast<double>()).sum();
    const double expected = 30.0 * 2 * std::numbers::pi * (1 - std::cos(radius));
    CHECK(std::abs(integral - expected) / expected < 0.05);
  }
}

TEST_CASE("synth_pano determinism and validation") {
  const SceneSpec spec = random_scene(42);
  CHECK(synth_pano(spec, 16, 32).pano.pixels() == synth_pano(spec, 16, 32).pano.pixels());
  CHECK(random_scene(42).lights.size() == spec.lights.size());
  CHECK_FALSE(synth_pano(random_scene(43), 16, 32).pano.pixels() == synth_pano(spec, 16, 32).pano.pixels());
  SceneSpec bad;
  bad.lights = {Light{{1, 0, 0}, 1.0, {1, 1, 1}}};
  CHECK_THROWS_AS(bad.validate(), Error);
  bad.lights = {Light{{1, 0, 0}, 0.1, {-1, 1, 1}}};
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("light profile") {
  CHECK(light_profile(0.0, 0.2) == 1.0);
  CHECK(light_profile(0.2, 0.2) == doctest::Approx(0.5));
  CHECK(light_profile(0.26, 0.2) == 0.0);
}

TEST_CASE("resize_area preserves mean radiance") {
  std::mt19937 rng(1);
  std::uniform_real_distribution<float> u(0, 10);
  ImageF img(24, 48, 3);
  for (Eigen::Index i = 0; i < img.size(); ++i) img.data()[i] = u(rng);
  const ImageF small = resize_area(img, 8, 16);
  CHECK(small.array().mean() == doctest::Approx(img.array().mean()).epsilon(1e-5));
  const ImageF odd = resize_area(img, 10, 20);
  CHECK(odd.array().mean() == doctest::Approx(img.array().mean()).epsilon(1e-5));
  // Each 3x3 block average.
  double block = 0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) block += img(1, i, j);
  CHECK(small(1, 0, 0) == doctest::Approx(block / 9).epsilon(1e-5));
}

TEST_CASE("RGBE round trip") {
  const fs::path dir = scratch("rgbe");
  SUBCASE("all ones within shared-exponent quantization") {
    write_rgbe(ImageF(64, 128, 3, 1.f), dir / "ones.hdr");
    const auto back = load_hdr(dir / "ones.hdr");
    CHECK(back.height() == 64);
    CHECK(((back.pixels().array() - 1.f).abs() <= 1.f / 256.f).all());
  }
  SUBCASE("zeros are exact") {
    write_rgbe(ImageF(8, 16, 3, 0.f), dir / "zeros.hdr");
    CHECK((read_rgbe(dir / "zeros.hdr").array() == 0.f).all());
  }
  SUBCASE("random radiance, error bounded relative to the pixel maximum") {
    std::mt19937 rng(9);
    std::lognormal_distribution<float> ln(0.0f, 2.0f);
    for (int width : {4, 64, 200}) {
      ImageF img(width / 2 > 0 ? width / 2 : 1, width, 3);
      for (Eigen::Index i = 0; i < img.size(); ++i) img.data()[i] = ln(rng);
      // Include long runs so the RLE path is exercised.
      for (int x = 0; x < width / 2; ++x)
        for (int c = 0; c < 3; ++c) img(c, 0, x) = 3.f;
      write_rgbe(img, dir / "rand.hdr");
      const ImageF back = read_rgbe(dir / "rand.hdr");
      REQUIRE(back.same_shape(img));
      for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x) {
          const float mx = std::max({img(0, y, x), img(1, y, x), img(2, y, x)});
          for (int c = 0; c < 3; ++c) CHECK(std::abs(back(c, y, x) - img(c, y, x)) <= mx / 256.f);
        }
    }
  }
}

TEST_CASE("RGBE flat and old-RLE scanlines") {
  const fs::path dir = scratch("rgbe_flat");
  const std::string header = "#?RADIANCE\nFORMAT=32-bit_rle_rgbe\n\n-Y 1 +X 8\n";
  // Flat: 8 pixels of (128,128,128,129) = 2.0 (decoded with the +0.5 offset).
  std::vector<unsigned char> flat;
  for (int i = 0; i < 8; ++i) flat.insert(flat.end(), {128, 128, 128, 129});
  write_bytes(dir / "flat.hdr", header, flat);
  const ImageF a = read_rgbe(dir / "flat.hdr");
  CHECK(a(0, 0, 7) == doctest::Approx(128.5 / 128.0));

  // Old-style run: one pixel then (1,1,1,7) repeats it 7 times.
  write_bytes(dir / "old.hdr", header, {128, 64, 32, 129, 1, 1, 1, 7});
  const ImageF b = read_rgbe(dir / "old.hdr");
  CHECK(b(1, 0, 7) == doctest::Approx(64.5 / 128.0));
  CHECK(b(2, 0, 3) == b(2, 0, 0));
}

TEST_CASE("RGBE errors carry distinct codes") {
  const fs::path dir = scratch("rgbe_err");
  write_rgbe(ImageF(16, 32, 3, 0.7f), dir / "good.hdr");
  const auto size = fs::file_size(dir / "good.hdr");
  fs::copy_file(dir / "good.hdr", dir / "trunc.hdr");
  fs::resize_file(dir / "trunc.hdr", size - 20);
  CHECK(error_code_of([&] { read_rgbe(dir / "trunc.hdr"); }) == Errc::truncated_scanline);
  try {
    read_rgbe(dir / "trunc.hdr");
  } catch (const Error& e) {
    CHECK(std::string(e.what()) == "truncated scanline");
  }

  write_bytes(dir / "nosig.hdr", "RADIANCE\n\n-Y 1 +X 8\n", {});
  CHECK(error_code_of([&] { read_rgbe(dir / "nosig.hdr"); }) == Errc::malformed_header);
  write_bytes(dir / "nores.hdr", "#?RADIANCE\nFORMAT=32-bit_rle_rgbe\n\nbogus\n", {});
  CHECK(error_code_of([&] { read_rgbe(dir / "nores.hdr"); }) == Errc::malformed_header);
  write_bytes(dir / "xyze.hdr", "#?RADIANCE\nFORMAT=32-bit_rle_xyze\n\n-Y 1 +X 8\n", {});
  CHECK(error_code_of([&] { read_rgbe(dir / "xyze.hdr"); }) == Errc::unsupported_format);
  write_bytes(dir / "flip.hdr", "#?RADIANCE\n\n+Y 1 +X 8\n", {});
  CHECK(error_code_of([&] { read_rgbe(dir / "flip.hdr"); }) == Errc::unsupported_format);
  write_bytes(dir / "badrle.hdr", "#?RADIANCE\n\n-Y 1 +X 8\n", {2, 2, 0, 9, 0, 0, 0, 0});
  CHECK(error_code_of([&] { read_rgbe(dir / "badrle.hdr"); }) == Errc::malformed_scanline);
  CHECK(error_code_of([&] { read_rgbe(dir / "missing.hdr"); }) == Errc::io_error);
  // Valid file but not a 2:1 panorama.
  write_rgbe(ImageF(4, 4, 3, 1.f), dir / "square.hdr");
  CHECK(error_code_of([&] { load_hdr(dir / "square.hdr"); }) == Errc::shape_mismatch);
}

TEST_CASE("PPM preview round trip") {
  const fs::path dir = scratch("ppm");
  ImageF img(3, 5, 3, 0.f);
  img(0, 1, 2) = 1.f;
  img(2, 2, 4) = 0.5f;
  write_ppm(img, dir / "a.ppm");
  const ImageF back = read_ppm(dir / "a.ppm");
  CHECK(back(0, 1, 2) == 1.f);
  CHECK(back(2, 2, 4) == doctest::Approx(128.f / 255.f));
}

TEST_CASE("prepare_dataset from a synthetic corpus") {
  const fs::path dir = scratch("prep_synth");
  PrepareOptions opt;
  opt.synthetic = SyntheticSource{10, 7};
  opt.out_dir = dir / "a";
  opt.height = 16;
  opt.width = 32;
  opt.seed = 3;
  const auto m = prepare_dataset(opt);
  CHECK(m.count(Split::train) == 8);
  CHECK(m.count(Split::test) == 2);
  CHECK(m.entries.size() == 10);
  CHECK(m.tone_map.alpha > 0);
  CHECK_NOTHROW(m.validate());

  const auto loaded = load_manifest(dir / "a" / "manifest.json");
  CHECK(loaded == m);
  const auto archive = TensorArchive::load(dir / "a" / m.train_tensors);
  CHECK(archive.get("train").shape == std::vector<std::int64_t>{8, 3, 16, 32});
  CHECK(archive.get("test").shape == std::vector<std::int64_t>{2, 3, 16, 32});
  // The tone-mapped training median sits at 0.5.
  std::vector<float> v = archive.get("train").values;
  std::nth_element(v.begin(), v.begin() + v.size() / 2, v.end());
  CHECK(v[v.size() / 2] == doctest::Approx(0.5).epsilon(0.01));

  opt.out_dir = dir / "b";
  const auto again = prepare_dataset(opt);
  CHECK(again == m);
  std::ifstream fa(dir / "a" / "manifest.json"), fb(dir / "b" / "manifest.json");
  CHECK(std::string(std::istreambuf_iterator<char>(fa), {}) ==
        std::string(std::istreambuf_iterator<char>(fb), {}));
  CHECK(load_split(m, dir / "a", Split::test).size() == 2);
}

TEST_CASE("prepare_dataset from a directory") {
  const fs::path dir = scratch("prep_dir");
  fs::create_directories(dir / "src");
  for (int i = 0; i < 4; ++i) write_rgbe(ImageF(32, 64, 3, 1.f), dir / "src" / ("p" + std::to_string(i) + ".hdr"));
  PrepareOptions opt;
  opt.source_dir = dir / "src";
  opt.out_dir = dir / "out";
  opt.height = 16;
  opt.width = 32;
  const auto m = prepare_dataset(opt);
  CHECK(m.tone_map.alpha == doctest::Approx(0.5).epsilon(0.01));
  for (const auto& e : m.entries) CHECK(e.alpha_used == m.tone_map.alpha);

  PrepareOptions empty = opt;
  fs::create_directories(dir / "empty");
  empty.source_dir = dir / "empty";
  CHECK(error_code_of([&] { prepare_dataset(empty); }) == Errc::empty_source);
  PrepareOptions bad = opt;
  bad.width = 30;
  CHECK(error_code_of([&] { prepare_dataset(bad); }) == Errc::shape_mismatch);
}

TEST_CASE("make_test_pair") {
  const pano::ToneMapParams p{0.5, 2.4};
  pano::CameraSpec cam;
  cam.crop_w = 32;
  cam.crop_h = 24;
  const auto pair = make_test_pair(pano::constant_hdr(32, 1.f), cam, p);
  CHECK(((pair.crop.array() - 0.5f).abs() < 1e-6f).all());
  CHECK(pair.ground_truth.pixels() == pano::constant_hdr(32, 1.f).pixels());

  SceneSpec spec;
  spec.ambient = {0.1, 0.1, 0.1};
  spec.lights = {Light{{1, 0, 0}, 0.2, {100, 100, 100}}};
  const auto lit = make_test_pair(synth_pano(spec, 32, 64).pano, cam, p);
  CHECK(lit.crop(0, 12, 16) == 1.f);
  CHECK(lit.crop.array().minCoeff() >= 0.f);
  CHECK(lit.crop.array().maxCoeff() <= 1.f);
}

TEST_CASE("Gaussian fit matches the D'Agostino-Pearson reference") {
  // Reference values from scipy.stats.normaltest on the same sequences.
  std::vector<double> a;
  for (int i = 0; i < 200; ++i) a.push_back(double(i * 7919 % 1000) / 1000.0);
  const auto fa = fit_gaussian(a);
  CHECK(fa.k2 == doctest::Approx(99.48102415469577).epsilon(1e-9));
  CHECK(fa.p_value == doctest::Approx(2.500173097609683e-22).epsilon(1e-8));

  std::vector<double> c;
  for (int i = 0; i < 60; ++i) c.push_back(std::exp(0.8 * std::sin(i * 1.3) + 0.01 * i));
  const auto fc = fit_gaussian(c);
  CHECK(fc.k2 == doctest::Approx(6.340254443175538).epsilon(1e-9));
  CHECK(fc.p_value == doctest::Approx(0.04199825447893497).epsilon(1e-8));

  CHECK(fit_gaussian(std::vector<double>(50, 1.0)).degenerate);
  CHECK(fit_gaussian(std::vector<double>{1, 2, 3}).degenerate);
}

TEST_CASE("distribution diagnostic flags") {
  const auto constant = analyze_image(pano::constant_hdr(16, 0.3f));
  CHECK(constant.ldr == FitStatus::degenerate);
  CHECK(constant.hdr_minus == FitStatus::empty);
  CHECK(constant.hdr_minus_pixel_fraction == 0.0);

  std::vector<pano::HdrPanorama> set = {pano::constant_hdr(16, 0.3f)};
  const auto report = analyze_distributions(set);
  CHECK(report.ldr_counted == 0);
  CHECK(report.hdr_minus_counted == 0);

  SceneSpec spec = random_scene(5);
  const auto lit = analyze_image(synth_pano(spec, 32, 64).pano);
  CHECK(lit.hdr_minus_pixel_fraction > 0.0);
  CHECK(lit.hdr_minus_pixel_fraction < 0.5);
  CHECK(lit.max_intensity > 1.0);
}
