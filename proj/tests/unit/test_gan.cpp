#include <cmath>
#include <filesystem>
#include <fstream>

#include <doctest.h>

#include "panolight/data/dataset.hpp"
#include "panolight/gan/branches.hpp"
#include "panolight/gan/sample.hpp"
#include "panolight/gan/train.hpp"
#include "panolight/pano/tonemap.hpp"

using namespace panolight;
using namespace panolight::gan;
namespace fs = std::filesystem;
using nn::Tensor;

namespace {

GeneratorConfig tiny_config() {
  GeneratorConfig c;
  c.latent_dim = 16;
  c.height = 16;
  c.width = 32;
  c.channel_base = 64;
  c.channel_max = 16;
  return c;
}

TrainConfig tiny_train(int steps) {
  TrainConfig t;
  t.batch = 2;
  t.steps = steps;
  t.checkpoint_every = 3;
  t.r1_interval = 2;
  t.seed = 5;
  return t;
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("panolight_test_gan_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

const fs::path& tiny_dataset() {
  static const fs::path dir = [] {
    const fs::path d = scratch("dataset");
    data::PrepareOptions po;
    po.synthetic = data::SyntheticSource{10, 3};
    po.out_dir = d;
    po.height = 16;
    po.width = 32;
    data::prepare_dataset(po);
    return d;
  }();
  return dir;
}

void set_noise_strength(Generator<float>& g, float value) {
  for (auto [name, var] : g.params().items())
    if (name.find("noise_strength") != std::string::npos) var.mutable_value().data.setConstant(value);
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

bool params_equal(const ParamSet<float>& a, const ParamSet<float>& b) {
  if (a.items().size() != b.items().size()) return false;
  for (std::size_t i = 0; i < a.items().size(); ++i)
    if (!(a.items()[i].second.value() == b.items()[i].second.value())) return false;
  return true;
}

}  // namespace

TEST_CASE("config validation and schedule") {
  GeneratorConfig c = tiny_config();
  CHECK_NOTHROW(c.validate());
  CHECK(c.levels() == 3);
  CHECK(c.num_ws() == 6);
  CHECK(c.channels(0) == 16);
  CHECK(c.channels(2) == 4);
  c.width = 48;
  CHECK(error_code_of([&] { c.validate(); }) == Errc::invalid_argument);
  c = tiny_config();
  c.height = 24;
  CHECK(error_code_of([&] { c.validate(); }) == Errc::invalid_argument);

  const Preset paper = paper_preset();
  CHECK(paper.generator.height == 256);
  CHECK(paper.generator.width == 512);
  CHECK(paper.train.batch == 32);
  CHECK(paper.train.lr_g == 0.0025);
  CHECK(paper.train.beta1 == 0.0);
  CHECK(paper.train.beta2 == 0.99);
  CHECK(paper.train.kimg == 4000);
  CHECK(paper.train.total_steps() == 125000);

  const nlohmann::json j = paper.generator;
  CHECK(j.get<GeneratorConfig>().channel_base == paper.generator.channel_base);
  const nlohmann::json k = paper.train;
  CHECK(k.get<TrainConfig>().style_mixing_prob == paper.train.style_mixing_prob);
}

TEST_CASE("mapping is deterministic and finite") {
  const Generator<float> g(tiny_config(), 1);
  nn::NoGradGuard guard;
  Rng rng(2);
  const auto z = nn::constant(Tensor<float>::randn({3, 16, 1, 1}, rng));
  CHECK(g.mapping(z).value() == g.mapping(z).value());
  const auto w0 = g.mapping(nn::constant(Tensor<float>({1, 16, 1, 1}))).value();
  CHECK(w0.data.allFinite());
}

TEST_CASE("synthesis is deterministic and uses the noise") {
  Generator<float> g(tiny_config(), 1);
  set_noise_strength(g, 0.2f);
  nn::NoGradGuard guard;
  Rng rng(3);
  const auto w = g.mapping(nn::constant(Tensor<float>::randn({1, 16, 1, 1}, rng)));
  NoiseMaps<float> noise = g.random_noise(rng);
  REQUIRE(noise.size() == std::size_t(g.config().num_conv_layers()));
  CHECK(noise.back().shape() == nn::Shape{1, 1, 16, 32});
  const auto a = g.synthesize(w, {&noise, nullptr}).value();
  const auto b = g.synthesize(w, {&noise, nullptr}).value();
  CHECK(a == b);
  CHECK(a.shape == nn::Shape{1, 3, 16, 32});
  for (std::size_t layer : {std::size_t(0), noise.size() - 1}) {
    NoiseMaps<float> changed = noise;
    Tensor<float> t = changed[layer].value();
    t.data += 0.5f;
    changed[layer] = nn::constant(t);
    const auto c = g.synthesize(w, {&changed, nullptr}).value();
    CHECK((c.data - a.data).square().sum() > 0);
  }
}

TEST_CASE("branches agree on the non-saturated set") {
  const Generator<float> g(tiny_config(), 4);
  const pano::ToneMapParams tm{0.6, 2.4};
  nn::NoGradGuard guard;
  Rng rng(5);
  const auto raw = g.synthesize(g.mapping(nn::constant(Tensor<float>::randn({2, 16, 1, 1}, rng))),
                                {nullptr, &rng});
  const auto hdr = hdr_branch(raw, tm).value();
  const auto ldr = ldr_branch(raw).value();
  const Eigen::ArrayXf back = pano::tonemap_expr(hdr.data, tm);
  int checked = 0;
  for (Eigen::Index i = 0; i < raw.value().data.size(); ++i) {
    const float r = raw.value().data[i];
    if (r >= 0 && r < 1) {
      CHECK(std::abs(back[i] - ldr.data[i]) <= 1e-5f * std::max(1.f, r));
      ++checked;
    } else if (r < 0) {
      CHECK(hdr.data[i] == 0.f);
      CHECK(ldr.data[i] == 0.f);
    } else {
      CHECK(ldr.data[i] == 1.f);
    }
  }
  CHECK(checked > 0);
}

TEST_CASE("discriminators have independent weights") {
  ModelCheckpoint ckpt(tiny_config(), tiny_train(1), {}, 9);
  const auto& d = ckpt.disc_hdr.params().items();
  const auto& dp = ckpt.disc_ldr.params().items();
  REQUIRE(d.size() == dp.size());
  bool any_diff = false;
  for (std::size_t i = 0; i < d.size(); ++i) {
    CHECK(d[i].second.node() != dp[i].second.node());
    any_diff = any_diff || !(d[i].second.value() == dp[i].second.value());
  }
  CHECK(any_diff);
  nn::Var<float>(d[0].second).mutable_value().data.setZero();
  CHECK(dp[0].second.value().data.abs().maxCoeff() > 0);
}

TEST_CASE("checkpoint round trip is bit-identical") {
  const fs::path dir = scratch("ckpt");
  ModelCheckpoint ckpt(tiny_config(), tiny_train(1), {0.37, 2.4}, 11);
  set_noise_strength(ckpt.generator_ema, 0.1f);
  ckpt.generator_ema.estimate_w_avg(64, 1);
  ckpt.step = 17;
  ckpt.optimizer_steps["G"] = 17;
  ckpt.optimizer_moments["G.m.x"] = Tensor<float>({1, 2, 1, 1}, 0.5f);
  save_checkpoint(ckpt, dir / "a.plta");
  const ModelCheckpoint back = load_checkpoint(dir / "a.plta");
  CHECK(back.step == 17);
  CHECK(back.tone_map == ckpt.tone_map);
  CHECK(back.generator_config.channel_base == 64);
  CHECK(params_equal(back.generator.params(), ckpt.generator.params()));
  CHECK(params_equal(back.generator_ema.params(), ckpt.generator_ema.params()));
  CHECK(params_equal(back.disc_hdr.params(), ckpt.disc_hdr.params()));
  CHECK(params_equal(back.disc_ldr.params(), ckpt.disc_ldr.params()));
  CHECK(back.generator_ema.w_avg == ckpt.generator_ema.w_avg);
  CHECK(back.optimizer_moments.at("G.m.x") == ckpt.optimizer_moments.at("G.m.x"));

  const auto a = sample(ckpt, 3, 2);
  const auto b = sample(back, 3, 2);
  for (int i = 0; i < 2; ++i) CHECK(a[std::size_t(i)].raw == b[std::size_t(i)].raw);

  std::ofstream(dir / "junk.plta") << "not an archive";
  CHECK(error_code_of([&] { load_checkpoint(dir / "junk.plta"); }) == Errc::archive_format);
  CHECK(error_code_of([&] { load_checkpoint(dir / "missing.plta"); }) == Errc::io_error);
}

TEST_CASE("sampling contract") {
  ModelCheckpoint ckpt(tiny_config(), tiny_train(1), {0.5, 2.4}, 12);
  ckpt.generator_ema.estimate_w_avg(64, 2);
  CHECK(sample(ckpt, 1, 0).empty());
  const auto a = sample(ckpt, 7, 3);
  const auto b = sample(ckpt, 7, 3);
  REQUIRE(a.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) CHECK(a[i].raw == b[i].raw);
  CHECK(!(a[0].raw == a[1].raw));
  // Sample i depends only on (seed, i).
  CHECK(sample(ckpt, 7, 1)[0].raw == a[0].raw);

  for (const auto& s : a) {
    const ImageF back = pano::tonemap(s.hdr, ckpt.tone_map);
    for (Eigen::Index i = 0; i < back.array().size(); ++i) {
      const float l = s.ldr.pixels().array()[i];
      if (l < 1.f) CHECK(std::abs(std::min(back.array()[i], 1.f) - l) <= 1e-5f);
    }
  }

  // Full truncation collapses every sample onto w_avg.
  const LatentState z0 = sample_latent(ckpt, 1, 0, 0.0);
  const LatentState z1 = sample_latent(ckpt, 1, 1, 0.0);
  CHECK(z0.w == z1.w);
  CHECK(z0.w == ckpt.generator_ema.w_avg);

  const fs::path dir = scratch("latent");
  save_latent(z0, dir / "z.plta");
  const LatentState back = load_latent(dir / "z.plta");
  CHECK(back.w == z0.w);
  REQUIRE(back.noise.size() == z0.noise.size());
  for (std::size_t i = 0; i < back.noise.size(); ++i) CHECK(back.noise[i] == z0.noise[i]);
}

TEST_CASE("R1 estimator matches a double-precision finite difference") {
  // Oracle: Q(theta) = v . dD/dx at fixed v = dD/dx(theta0), differentiated
  // along random parameter directions by central differences in double. The
  // estimator's accumulated grad is weight * dQ/dtheta.
  const GeneratorConfig cfg = tiny_config();
  Discriminator<float> disc(cfg, 21);
  Discriminator<double> ref(cfg, 21);
  Rng rng(4);
  const Tensor<double> reals = Tensor<double>::randn({2, 3, 16, 32}, rng);
  const double weight = 2.0;
  disc.params().zero_grad();
  const double value = r1_penalty(disc, reals.cast<float>(), weight);

  auto input_grad = [&](Discriminator<double>& d) {
    d.params().set_requires_grad(false);
    nn::Var<double> x = nn::parameter(reals);
    nn::backward(nn::sum(d(x)));
    d.params().set_requires_grad(true);
    return x.grad();
  };
  const Tensor<double> v = input_grad(ref);
  CHECK(value == doctest::Approx(v.data.square().sum() / 2).epsilon(1e-4));

  auto q_along = [&](const std::vector<Tensor<double>>& dir, double h) {
    Discriminator<double> moved = ref.clone();
    auto mv = moved.params().vars();
    for (std::size_t i = 0; i < mv.size(); ++i) mv[i].mutable_value().data += h * dir[i].data;
    return (input_grad(moved).data * v.data).sum();
  };
  const auto fvars = disc.params().vars();
  for (int trial = 0; trial < 3; ++trial) {
    std::vector<Tensor<double>> dir;
    double predicted = 0;
    for (auto fv : fvars) {
      Tensor<double> d = Tensor<double>::randn(fv.shape(), rng);
      if (fv.has_grad()) predicted += (fv.grad().data.cast<double>() * d.data).sum();
      dir.push_back(std::move(d));
    }
    const double h = 1e-6;
    const double numeric = weight * (q_along(dir, h) - q_along(dir, -h)) / (2 * h);
    CHECK(predicted == doctest::Approx(numeric).epsilon(1e-3));
  }
}

TEST_CASE("train writes log and checkpoint, resumes exactly, keeps tone map") {
  const fs::path& data_dir = tiny_dataset();
  const auto manifest = data::load_manifest(data_dir / "manifest.json");

  TrainRequest full;
  full.data_dir = data_dir;
  full.out_dir = scratch("train_full");
  full.preset = {tiny_config(), tiny_train(6)};
  int calls = 0;
  full.on_step = [&](const TrainLogRow& r) {
    CHECK(r.step == calls + 1);
    CHECK(std::isfinite(r.loss_g));
    ++calls;
  };
  const ModelCheckpoint a = train(full);
  CHECK(calls == 6);
  CHECK(a.step == 6);
  CHECK(a.tone_map == manifest.tone_map);
  CHECK(fs::exists(full.out_dir / "checkpoint.plta"));
  {
    std::ifstream log(full.out_dir / "train_log.csv");
    std::string header;
    std::getline(log, header);
    CHECK(header == "step,loss_G,loss_D,loss_D',R1_D,R1_D'");
    int rows = 0;
    for (std::string line; std::getline(log, line);) ++rows;
    CHECK(rows == 6);
  }

  TrainRequest part = full;
  part.out_dir = scratch("train_part");
  part.on_step = nullptr;
  part.preset.train.steps = 3;
  train(part);
  TrainRequest rest = part;
  rest.preset.train.steps = 6;
  rest.resume_from = part.out_dir / "checkpoint.plta";
  const ModelCheckpoint b = train(rest);
  CHECK(b.step == 6);
  CHECK(params_equal(a.generator.params(), b.generator.params()));
  CHECK(params_equal(a.generator_ema.params(), b.generator_ema.params()));
  CHECK(params_equal(a.disc_hdr.params(), b.disc_hdr.params()));
  CHECK(params_equal(a.disc_ldr.params(), b.disc_ldr.params()));
  std::ifstream log(rest.out_dir / "train_log.csv");
  int rows = -1;
  for (std::string line; std::getline(log, line);) ++rows;
  CHECK(rows == 6);
}

TEST_CASE("train aborts on a non-finite loss and on a resolution mismatch") {
  const fs::path& data_dir = tiny_dataset();
  const fs::path dir = scratch("train_nan");
  TrainRequest req;
  req.data_dir = data_dir;
  req.out_dir = dir;
  req.preset = {tiny_config(), tiny_train(1)};
  train(req);
  ModelCheckpoint ckpt = load_checkpoint(dir / "checkpoint.plta");
  nn::Var<float>(ckpt.disc_hdr.params().items()[0].second).mutable_value().data.setConstant(NAN);
  save_checkpoint(ckpt, dir / "bad.plta");
  req.resume_from = dir / "bad.plta";
  req.preset.train.steps = 2;
  try {
    train(req);
    FAIL("expected divergence");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::divergence);
    CHECK(std::string(e.what()).find("step 2") != std::string::npos);
  }

  TrainRequest wrong;
  wrong.data_dir = data_dir;
  wrong.out_dir = scratch("train_wrong");
  GeneratorConfig g = tiny_config();
  g.height = 32;
  g.width = 64;
  wrong.preset = {g, tiny_train(1)};
  CHECK(error_code_of([&] { train(wrong); }) == Errc::shape_mismatch);
}
