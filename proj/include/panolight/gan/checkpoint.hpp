#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "panolight/core/archive.hpp"
#include "panolight/gan/networks.hpp"
#include "panolight/pano/tonemap.hpp"

namespace panolight::gan {

/// Generator (live and moving-average copies), the HDR discriminator D and
/// the LDR discriminator D', the fixed tone curve, and training counters.
/// Optimizer moments are carried by name so training can resume exactly.
struct ModelCheckpoint {
  ModelCheckpoint(const GeneratorConfig& generator_config, const TrainConfig& train_config,
                  const pano::ToneMapParams& tone_map, std::uint64_t seed);

  GeneratorConfig generator_config;
  TrainConfig train_config;
  pano::ToneMapParams tone_map;
  long long step = 0;
  double pl_mean = 0.0;

  Generator<float> generator;
  Generator<float> generator_ema;
  Discriminator<float> disc_hdr;
  Discriminator<float> disc_ldr;

  /// "<optimizer>.<m|v>.<param>" -> moment tensor; "<optimizer>" -> step count.
  std::map<std::string, nn::Tensor<float>> optimizer_moments;
  std::map<std::string, long long> optimizer_steps;

  ModelCheckpoint clone() const;
};

void save_checkpoint(const ModelCheckpoint& ckpt, const std::filesystem::path& path);
/// Throws archive_format on a missing or mis-shaped tensor, io_error if the
/// file cannot be read.
ModelCheckpoint load_checkpoint(const std::filesystem::path& path);

/// Float32 tensor <-> archive entry helpers shared with other result files.
void put_tensor(TensorArchive& archive, const std::string& name, const nn::Tensor<float>& t);
nn::Tensor<float> get_tensor(const TensorArchive& archive, const std::string& name);

}  // namespace panolight::gan
