#include "panolight/gan/sample.hpp"

#include <cstdio>

#include "panolight/core/archive.hpp"

namespace panolight::gan {

using nn::Tensor;

LatentState sample_latent(const ModelCheckpoint& ckpt, std::uint64_t seed, int index,
                          double truncation) {
  nn::NoGradGuard guard;
  const Generator<float>& g = ckpt.generator_ema;
  Rng rng(derive_seed(seed, std::uint64_t(index)));
  const int D = g.config().latent_dim;
  LatentState z;
  z.w = g.mapping(nn::constant(Tensor<float>::randn({1, D, 1, 1}, rng))).value();
  z.w.data = g.w_avg.data + float(truncation) * (z.w.data - g.w_avg.data);
  for (const auto& n : g.random_noise(rng)) z.noise.push_back(n.value());
  return z;
}

NoiseMaps<float> noise_vars(const std::vector<Tensor<float>>& noise, bool trainable) {
  NoiseMaps<float> maps;
  for (const auto& t : noise) maps.push_back(trainable ? nn::parameter(t) : nn::constant(t));
  return maps;
}

PanoSample render(const Generator<float>& g, const pano::ToneMapParams& tm, const LatentState& z) {
  nn::NoGradGuard guard;
  const NoiseMaps<float> maps = noise_vars(z.noise, false);
  ImageF raw = nn::to_image(g.synthesize(nn::constant(z.w), {&maps, nullptr}).value());
  pano::HdrPanorama hdr = pano::psi(raw, tm);
  pano::LdrPanorama ldr = pano::phi(raw);
  return {std::move(raw), std::move(hdr), std::move(ldr)};
}

std::vector<PanoSample> sample(const ModelCheckpoint& ckpt, std::uint64_t seed, int count,
                               double truncation) {
  std::vector<PanoSample> out;
  for (int i = 0; i < count; ++i)
    out.push_back(render(ckpt.generator_ema, ckpt.tone_map, sample_latent(ckpt, seed, i, truncation)));
  return out;
}

void save_latent(const LatentState& z, const std::filesystem::path& path) {
  TensorArchive a;
  a.metadata()["format"] = "panolight-latent";
  a.metadata()["noise_layers"] = z.noise.size();
  put_tensor(a, "w", z.w);
  for (std::size_t i = 0; i < z.noise.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "noise.%03zu", i);
    put_tensor(a, name, z.noise[i]);
  }
  a.save(path);
}

LatentState load_latent(const std::filesystem::path& path) {
  const TensorArchive a = TensorArchive::load(path);
  if (a.metadata().value("format", "") != "panolight-latent")
    fail(Errc::archive_format, path.string() + " is not a latent file");
  LatentState z;
  z.w = get_tensor(a, "w");
  const std::size_t layers = a.metadata().value("noise_layers", std::size_t(0));
  for (std::size_t i = 0; i < layers; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "noise.%03zu", i);
    z.noise.push_back(get_tensor(a, name));
  }
  return z;
}

}  // namespace panolight::gan
