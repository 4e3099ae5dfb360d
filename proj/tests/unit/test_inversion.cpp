#include <cmath>
#include <cstdlib>
#include <filesystem>

#include <doctest.h>

#include "panolight/gan/sample.hpp"
#include "panolight/inversion/inversion.hpp"
#include "panolight/pano/tonemap.hpp"

using namespace panolight;
using namespace panolight::inversion;
namespace fs = std::filesystem;
using nn::Tensor;

namespace {

gan::ModelCheckpoint tiny_checkpoint() {
  gan::GeneratorConfig c;
  c.latent_dim = 16;
  c.height = 16;
  c.width = 32;
  c.channel_base = 64;
  c.channel_max = 16;
  gan::ModelCheckpoint ckpt(c, gan::TrainConfig{}, pano::ToneMapParams{}, 11);
  ckpt.generator_ema.estimate_w_avg(200, 3);
  return ckpt;
}

HyperParams quick(int latent_steps = 20, int pivotal_steps = 10) {
  HyperParams hp;
  hp.steps_latent = latent_steps;
  hp.steps_pivotal = pivotal_steps;
  hp.seed = 7;
  return hp;
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("panolight_test_inversion_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

ImageF random_image(int h, int w, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<float> u(0.f, 1.f);
  ImageF img(h, w, 3);
  for (Eigen::Index i = 0; i < img.size(); ++i) img.array()[i] = u(rng);
  return img;
}

/// Left half of the panorama visible.
Mask left_half(int h, int w) {
  Mask m = Mask::Constant(h, w, false);
  m.leftCols(w / 2).setConstant(true);
  return m;
}

/// Observation of the checkpoint's own sample through `visibility`.
Observation own_sample_observation(const gan::ModelCheckpoint& ckpt, int index,
                                   const Mask& visibility) {
  const auto s = gan::render(ckpt.generator_ema, ckpt.tone_map, gan::sample_latent(ckpt, 21, index));
  return make_observation(s.ldr, visibility);
}

double masked_error(const gan::Generator<float>& g, const gan::LatentState& z,
                    const Observation& obs) {
  const auto s = gan::render(g, pano::ToneMapParams{}, z);
  return masked_mse(s.raw, obs.target.pixels(), obs.masks.visibility);
}

double relative_change(const gan::Generator<float>& a, const gan::Generator<float>& b) {
  double diff = 0, ref = 0;
  const auto& ia = a.params().items();
  const auto& ib = b.params().items();
  for (std::size_t i = 0; i < ia.size(); ++i) {
    diff += (ia[i].second.value().data - ib[i].second.value().data).cast<double>().square().sum();
    ref += ib[i].second.value().data.cast<double>().square().sum();
  }
  return std::sqrt(diff / ref);
}

void write_feature_archive(const fs::path& path, bool negative_lin) {
  Rng rng(4);
  TensorArchive a;
  a.metadata()["format"] = "panolight-perceptual";
  a.metadata()["pool_after"] = std::vector<int>{0};
  int cin = 3;
  for (int i = 0; i < 2; ++i) {
    const int o = 8;
    const std::string p = "conv" + std::to_string(i);
    gan::put_tensor(a, p + ".weight", Tensor<float>::randn({o, cin, 3, 3}, rng));
    gan::put_tensor(a, p + ".bias", Tensor<float>({1, o, 1, 1}));
    gan::put_tensor(a, "lin" + std::to_string(i),
                    Tensor<float>({1, o, 1, 1}, negative_lin && i == 1 ? -1.f : 0.5f));
    cin = o;
  }
  a.save(path);
}

}  // namespace

TEST_CASE("hyperparameters validate and round-trip through json") {
  HyperParams hp;
  CHECK(hp.lambda_n == 1e5);
  CHECK(hp.lambda_l2_r == 10);
  CHECK(hp.lambda_l2_rp == 10);
  CHECK(hp.eta == 1);
  CHECK(hp.beta_l2 == 10);
  CHECK(hp.focal_fraction == doctest::Approx(0.10));
  CHECK_NOTHROW(hp.validate());

  hp.interp_alpha = 12.5;
  hp.steps_pivotal = 3;
  const nlohmann::json j = hp;
  const HyperParams back = j.get<HyperParams>();
  CHECK(back.interp_alpha == 12.5);
  CHECK(back.steps_pivotal == 3);
  CHECK(nlohmann::json::parse(R"({"eta": 0.5})").get<HyperParams>().lambda_n == 1e5);

  HyperParams bad;
  bad.eta = -1;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = HyperParams{};
  bad.steps_latent = 0;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = HyperParams{};
  bad.interp_alpha = 0;
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("patch-statistics distance is a premetric that grows with perturbation") {
  const PatchStatsDistance d;
  const ImageF x = random_image(16, 32, 1), y = random_image(16, 32, 2);
  CHECK(d.distance(x, x) == 0.0);
  CHECK(d.distance(x, y) == doctest::Approx(d.distance(y, x)).epsilon(1e-6));
  CHECK(d.distance(x, y) > 0);
  CHECK_THROWS_AS(d.distance(x, random_image(8, 16, 2)), Error);

  const double eps[] = {0.01, 0.03, 0.1, 0.3};
  double prev = 0;
  for (double e : eps) {
    double mean = 0;
    for (int trial = 0; trial < 10; ++trial) {
      const ImageF noise = random_image(16, 32, 100 + trial);
      ImageF xp = x;
      xp.array() += float(e) * (noise.array() - 0.5f);
      mean += d.distance(x, xp) / 10;
    }
    CHECK(mean > prev);
    prev = mean;
  }
}

TEST_CASE("feature distance loads from the cache directory") {
  const fs::path dir = scratch("cache");
  write_feature_archive(dir / kPerceptualWeightsFile, false);
  ::setenv("STYLELIGHT_CACHE", dir.c_str(), 1);
  const auto d = default_perceptual();
  CHECK(d->name().rfind("feature:", 0) == 0);
  const ImageF x = random_image(16, 32, 1), y = random_image(16, 32, 2);
  CHECK(d->distance(x, x) == 0.0);
  CHECK(d->distance(x, y) == doctest::Approx(d->distance(y, x)).epsilon(1e-5));
  CHECK(d->distance(x, y) > 0);

  write_feature_archive(dir / "negative.plta", true);
  CHECK_THROWS_AS(FeatureDistance::load(dir / "negative.plta"), Error);

  ::setenv("STYLELIGHT_CACHE", (dir / "missing").c_str(), 1);
  CHECK(default_perceptual()->name() == "patch-stats");
  ::unsetenv("STYLELIGHT_CACHE");
}

TEST_CASE("noise regularizer separates white noise from structure") {
  Rng rng(9);
  gan::NoiseMaps<float> white{nn::constant(Tensor<float>::randn({1, 1, 64, 128}, rng))};
  const double w = noise_regularizer(white).item();
  CHECK(w >= 0);
  CHECK(w < 0.1);

  gan::NoiseMaps<float> flat{nn::constant(Tensor<float>({1, 1, 64, 128}, 1.f))};
  CHECK(noise_regularizer(flat).item() >= 2.0);

  gan::NoiseMaps<float> ramp{nn::constant(Tensor<float>({1, 1, 8, 16}))};
  for (int x = 0; x < 16; ++x)
    for (int y = 0; y < 8; ++y) ramp[0].mutable_value().at(0, 0, y, x) = std::sin(0.4f * x);
  CHECK(noise_regularizer(ramp).item() > 0.1);
}

TEST_CASE("observation construction") {
  const ImageF img = random_image(16, 32, 5);
  const Mask vis = left_half(16, 32);
  const Observation obs = make_observation(pano::LdrPanorama(img), vis);
  CHECK(obs.target.pixels()(0, 3, 30) == 0.f);
  CHECK(obs.target.pixels()(1, 3, 3) == img(1, 3, 3));
  CHECK(obs.masks.focal.count() == pano::focal_count(vis.count(), 0.10));
  CHECK_FALSE((obs.masks.focal && !vis).any());

  const Error e = [&] {
    try {
      make_observation(pano::LdrPanorama(img), Mask::Constant(16, 32, false));
    } catch (const Error& err) {
      return err;
    }
    return Error(Errc::invalid_argument, "no throw");
  }();
  CHECK(e.code() == Errc::empty_observation);
  CHECK_THROWS_AS(make_observation(pano::LdrPanorama(img), Mask::Constant(8, 16, true)), Error);

  const auto ckpt = tiny_checkpoint();
  Observation empty = obs;
  empty.masks.visibility.setConstant(false);
  try {
    invert_latent(empty, ckpt.generator_ema, quick(), PatchStatsDistance{});
    FAIL("expected empty_observation");
  } catch (const Error& err) {
    CHECK(err.code() == Errc::empty_observation);
  }
}

TEST_CASE("latent phase ignores pixels outside the visibility mask") {
  const auto ckpt = tiny_checkpoint();
  const Mask vis = left_half(16, 32);
  const Observation a = own_sample_observation(ckpt, 0, vis);
  Observation b = a;
  ImageF changed = b.target.pixels();
  changed.plane(0).rightCols(16).setConstant(1.f);
  b.target = pano::LdrPanorama(changed);

  const HyperParams hp = quick(8);
  const LatentFit fa = invert_latent(a, ckpt.generator_ema, hp, PatchStatsDistance{});
  const LatentFit fb = invert_latent(b, ckpt.generator_ema, hp, PatchStatsDistance{});
  for (std::size_t i = 0; i < fa.trace.size(); ++i)
    CHECK(fa.trace[i].objective == fb.trace[i].objective);
  CHECK(fa.latent.w == fb.latent.w);
}

TEST_CASE("with only the focal term, only focal pixels matter") {
  const auto ckpt = tiny_checkpoint();
  const Observation a = own_sample_observation(ckpt, 1, left_half(16, 32));
  Observation b = a;
  ImageF changed = b.target.pixels();
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 32; ++x)
      if (a.masks.visibility(y, x) && !a.masks.focal(y, x)) changed(2, y, x) = 0.5f;
  b.target = pano::LdrPanorama(changed);

  HyperParams hp = quick(6);
  hp.perceptual_weight = 0;
  hp.lambda_n = 0;
  const LatentFit fa = invert_latent(a, ckpt.generator_ema, hp, PatchStatsDistance{});
  const LatentFit fb = invert_latent(b, ckpt.generator_ema, hp, PatchStatsDistance{});
  for (std::size_t i = 0; i < fa.trace.size(); ++i)
    CHECK(fa.trace[i].objective == fb.trace[i].objective);
}

TEST_CASE("latent phase traces, determinism and progress") {
  const auto ckpt = tiny_checkpoint();
  const Observation obs = own_sample_observation(ckpt, 2, left_half(16, 32));
  const HyperParams hp = quick(60);
  const LatentFit a = invert_latent(obs, ckpt.generator_ema, hp, PatchStatsDistance{});
  const LatentFit b = invert_latent(obs, ckpt.generator_ema, hp, PatchStatsDistance{});

  REQUIRE(a.trace.size() == 60);
  for (std::size_t i = 0; i < a.trace.size(); ++i) {
    CHECK(a.trace[i].step == int(i));
    CHECK(std::isfinite(a.trace[i].objective));
    CHECK(a.trace[i].best <= a.trace[i].objective);
    if (i > 0) CHECK(a.trace[i].best <= a.trace[i - 1].best);
    CHECK(a.trace[i].objective == b.trace[i].objective);
  }
  CHECK(a.latent.w == b.latent.w);
  CHECK(a.trace.back().best < a.trace.front().objective);

  gan::LatentState start;
  start.w = ckpt.generator_ema.w_avg;
  start.noise = a.latent.noise;
  CHECK(masked_error(ckpt.generator_ema, a.latent, obs) <
        masked_error(ckpt.generator_ema, start, obs));
  for (const auto& n : a.latent.noise) {
    CHECK(std::abs(n.data.mean()) < 1e-4);
    CHECK(std::sqrt(n.data.square().mean()) == doctest::Approx(1.0).epsilon(1e-4));
  }
}

TEST_CASE("pivotal tuning fits the pivot and leaves the source untouched") {
  const auto ckpt = tiny_checkpoint();
  const auto before = ckpt.clone();
  const Observation obs = own_sample_observation(ckpt, 3, left_half(16, 32));
  HyperParams hp = quick(40, 40);
  const LatentFit lf = invert_latent(obs, ckpt.generator_ema, hp, PatchStatsDistance{});
  const PivotalFit pf = pivotal_finetune(lf.latent, obs, ckpt.generator_ema, hp, PatchStatsDistance{});

  CHECK(pf.trace.size() == 40);
  CHECK(masked_error(pf.generator, lf.latent, obs) < masked_error(ckpt.generator_ema, lf.latent, obs));
  CHECK(relative_change(ckpt.generator_ema, before.generator_ema) == 0.0);
  const auto mapping_tuned = pf.generator.mapping_parameters();
  const auto mapping_source = ckpt.generator_ema.mapping_parameters();
  for (std::size_t i = 0; i < mapping_tuned.size(); ++i)
    CHECK(mapping_tuned[i].value() == mapping_source[i].value());

  gan::LatentState wrong = lf.latent;
  wrong.noise.pop_back();
  CHECK_THROWS_AS(pivotal_finetune(wrong, obs, ckpt.generator_ema, hp, PatchStatsDistance{}), Error);
}

TEST_CASE("locality regularizer restrains drift away from the pivot") {
  const auto ckpt = tiny_checkpoint();
  const Observation obs = own_sample_observation(ckpt, 4, left_half(16, 32));
  HyperParams hp = quick(20, 60);
  hp.lr_pivotal = 3e-3;
  hp.interp_alpha = 2;
  const LatentFit lf = invert_latent(obs, ckpt.generator_ema, hp, PatchStatsDistance{});

  hp.eta = 0;
  const PivotalFit free = pivotal_finetune(lf.latent, obs, ckpt.generator_ema, hp, PatchStatsDistance{});
  hp.eta = 1e6;
  const PivotalFit held = pivotal_finetune(lf.latent, obs, ckpt.generator_ema, hp, PatchStatsDistance{});

  CHECK(relative_change(held.generator, ckpt.generator_ema) <
        relative_change(free.generator, ckpt.generator_ema));

  double drift_free = 0, drift_held = 0;
  for (int i = 0; i < 5; ++i) {
    const auto z = gan::sample_latent(ckpt, 99, i);
    const ImageF ref = gan::render(ckpt.generator_ema, ckpt.tone_map, z).ldr.pixels();
    drift_free += (gan::render(free.generator, ckpt.tone_map, z).ldr.pixels().array() - ref.array())
                      .square().mean();
    drift_held += (gan::render(held.generator, ckpt.tone_map, z).ldr.pixels().array() - ref.array())
                      .square().mean();
  }
  CHECK(drift_held < drift_free);
}

TEST_CASE("strong locality weight keeps the weights near the source") {
  const auto ckpt = tiny_checkpoint();
  const Observation obs = own_sample_observation(ckpt, 5, left_half(16, 32));
  HyperParams hp = quick(10, 40);
  hp.eta = 1e6;
  const LatentFit lf = invert_latent(obs, ckpt.generator_ema, hp, PatchStatsDistance{});
  const PivotalFit pf = pivotal_finetune(lf.latent, obs, ckpt.generator_ema, hp, PatchStatsDistance{});
  CHECK(relative_change(pf.generator, ckpt.generator_ema) < 1e-3);
}

TEST_CASE("non-finite objective aborts with the trace attached") {
  auto ckpt = tiny_checkpoint();
  const Observation obs = own_sample_observation(ckpt, 0, left_half(16, 32));
  for (auto& [name, v] : ckpt.generator_ema.params().items())
    if (name.rfind("synthesis.", 0) == 0) {
      nn::Var<float>(v).mutable_value().data.setConstant(NAN);
      break;
    }
  try {
    invert_latent(obs, ckpt.generator_ema, quick(), PatchStatsDistance{});
    FAIL("expected divergence");
  } catch (const OptimizationDivergence& e) {
    CHECK(e.code() == Errc::divergence);
    REQUIRE(e.trace().size() == 1);
    CHECK(std::isnan(e.trace()[0].objective));
  }
}

TEST_CASE("estimate_lighting pipeline and result archive") {
  const auto ckpt = tiny_checkpoint();
  const auto source = gan::render(ckpt.generator_ema, ckpt.tone_map, gan::sample_latent(ckpt, 31, 0));
  pano::CameraSpec cam;
  cam.crop_w = 24;
  cam.crop_h = 18;
  const ImageF crop = pano::crop_from_pano(source.ldr.pixels(), cam);
  const PatchStatsDistance d;
  const InversionResult r = estimate_lighting(crop, cam, ckpt, quick(10, 5), &d);
  const InversionResult again = estimate_lighting(crop, cam, ckpt, quick(10, 5), &d);

  CHECK(r.trace_latent.size() == 10);
  CHECK(r.trace_pivotal.size() == 5);
  CHECK(r.hdr_out.height() == 16);
  CHECK(r.hdr_out.pixels() == again.hdr_out.pixels());
  const auto re = gan::render(r.generator, ckpt.tone_map, r.latent);
  CHECK(re.hdr.pixels() == r.hdr_out.pixels());
  CHECK(re.ldr.pixels() == r.ldr_out.pixels());

  const fs::path dir = scratch("result");
  save_result(r, ckpt, dir);
  for (const char* f : {"hdr_out.hdr", "ldr_out.ppm", "latent.plta", "theta.plta", "traces.csv"})
    CHECK(fs::exists(dir / f));
  const auto theta = gan::load_checkpoint(dir / "theta.plta");
  CHECK(relative_change(theta.generator_ema, r.generator) == 0.0);
  const auto z = gan::load_latent(dir / "latent.plta");
  CHECK(z.w == r.latent.w);
}
