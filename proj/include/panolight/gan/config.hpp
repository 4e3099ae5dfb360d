#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace panolight::gan {

/// Generator and discriminator architecture. Resolution levels double from
/// 4x8 up to height x width; level channels are min(channel_base / h, channel_max).
struct GeneratorConfig {
  int latent_dim = 512;
  int mapping_layers = 8;
  double mapping_lr_mult = 0.01;
  int height = 64;
  int width = 128;
  int channel_base = 1024;
  int channel_max = 128;

  void validate() const;
  int levels() const;
  /// Rows of level i (0 = 4x8).
  int level_height(int level) const { return 4 << level; }
  int channels(int level) const;
  /// Convolution layers in the synthesis network, one noise map each.
  int num_conv_layers() const { return 2 * levels() - 1; }
  /// Style vectors consumed by the synthesis network.
  int num_ws() const { return num_conv_layers() + 1; }

  bool operator==(const GeneratorConfig&) const = default;
};

struct TrainConfig {
  int batch = 8;
  int micro_batch = 0;  // 0 = whole batch at once
  long long steps = 2000;
  double kimg = 0;      // when > 0, steps = ceil(kimg * 1000 / batch)
  double lr_g = 0.0025;
  double lr_d = 0.0025;
  double beta1 = 0.0;
  double beta2 = 0.99;
  double r1_gamma = 1.0;
  int r1_interval = 4;
  double pl_weight = 0.0;
  int pl_interval = 4;
  double style_mixing_prob = 0.0;
  double ema_kimg = 1.0;
  bool augment_roll = true;
  int checkpoint_every = 500;
  std::uint64_t seed = 0;

  void validate() const;
  long long total_steps() const;

  bool operator==(const TrainConfig&) const = default;
};

struct Preset {
  GeneratorConfig generator;
  TrainConfig train;
};

/// Desk-scale run: latent 64, batch 8, 2k steps, no style mixing or
/// path-length regularization.
Preset toy_preset(int height = 64);
/// 256x512, batch 32, 4000 kimg, style mixing and path-length regularization on.
Preset paper_preset();
/// "toy" or "paper".
Preset preset_by_name(const std::string& name);

void to_json(nlohmann::json& j, const GeneratorConfig& c);
void from_json(const nlohmann::json& j, GeneratorConfig& c);
void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

}  // namespace panolight::gan
