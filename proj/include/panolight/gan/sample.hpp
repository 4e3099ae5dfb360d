#pragma once

#include <filesystem>
#include <vector>

#include "panolight/gan/checkpoint.hpp"
#include "panolight/pano/panorama.hpp"

namespace panolight::gan {

/// A single w plus one noise map per synthesis layer.
struct LatentState {
  nn::Tensor<float> w;  // [1, latent, 1, 1]
  std::vector<nn::Tensor<float>> noise;
};

/// Both branches of one shared forward pass.
struct PanoSample {
  ImageF raw;
  pano::HdrPanorama hdr;
  pano::LdrPanorama ldr;
};

/// Latent of sample `index` for `seed`: z ~ N(0, I), w = w_avg + truncation
/// * (mapping(z) - w_avg), white noise maps. Uses the moving-average generator.
LatentState sample_latent(const ModelCheckpoint& ckpt, std::uint64_t seed, int index,
                          double truncation = 1.0);

/// Raw output and its psi / phi images.
PanoSample render(const Generator<float>& g, const pano::ToneMapParams& tm, const LatentState& z);

/// `count` samples; sample i depends only on (seed, i).
std::vector<PanoSample> sample(const ModelCheckpoint& ckpt, std::uint64_t seed, int count,
                               double truncation = 1.0);

NoiseMaps<float> noise_vars(const std::vector<nn::Tensor<float>>& noise, bool trainable);

void save_latent(const LatentState& z, const std::filesystem::path& path);
LatentState load_latent(const std::filesystem::path& path);

}  // namespace panolight::gan
