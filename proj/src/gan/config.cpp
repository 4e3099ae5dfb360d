#include "panolight/gan/config.hpp"

#include <algorithm>
#include <cmath>

#include "panolight/core/error.hpp"

namespace panolight::gan {

void GeneratorConfig::validate() const {
  require(latent_dim >= 1 && mapping_layers >= 1 && mapping_lr_mult > 0, Errc::invalid_argument,
          "generator: latent_dim, mapping_layers and mapping_lr_mult must be positive");
  require(width == 2 * height, Errc::invalid_argument, "generator: output width must be 2 x height");
  require(height >= 4 && (height & (height - 1)) == 0, Errc::invalid_argument,
          "generator: height must be a power of two >= 4");
  require(channel_base >= 1 && channel_max >= 1, Errc::invalid_argument,
          "generator: channel_base and channel_max must be positive");
}

int GeneratorConfig::levels() const {
  int n = 1;
  while ((4 << (n - 1)) < height) ++n;
  return n;
}

int GeneratorConfig::channels(int level) const {
  return std::max(1, std::min(channel_base / level_height(level), channel_max));
}

void TrainConfig::validate() const {
  require(batch >= 1 && micro_batch >= 0 && micro_batch <= batch, Errc::invalid_argument,
          "train: need batch >= 1 and 0 <= micro_batch <= batch");
  require(steps >= 0 && kimg >= 0, Errc::invalid_argument, "train: steps and kimg must be >= 0");
  require(lr_g > 0 && lr_d > 0, Errc::invalid_argument, "train: learning rates must be positive");
  require(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1, Errc::invalid_argument,
          "train: Adam betas must lie in [0, 1)");
  require(r1_gamma >= 0 && pl_weight >= 0 && ema_kimg >= 0, Errc::invalid_argument,
          "train: regularization weights must be nonnegative");
  require(r1_interval >= 1 && pl_interval >= 1 && checkpoint_every >= 1, Errc::invalid_argument,
          "train: intervals must be >= 1");
  require(style_mixing_prob >= 0 && style_mixing_prob <= 1, Errc::invalid_argument,
          "train: style_mixing_prob must lie in [0, 1]");
}

long long TrainConfig::total_steps() const {
  if (kimg > 0) return (long long)std::ceil(kimg * 1000.0 / batch);
  return steps;
}

Preset toy_preset(int height) {
  Preset p;
  p.generator.latent_dim = 64;
  p.generator.height = height;
  p.generator.width = 2 * height;
  p.generator.channel_base = 1024;
  p.generator.channel_max = 128;
  return p;
}

Preset paper_preset() {
  Preset p;
  p.generator.latent_dim = 512;
  p.generator.height = 256;
  p.generator.width = 512;
  p.generator.channel_base = 16384;
  p.generator.channel_max = 512;
  p.train.batch = 32;
  p.train.micro_batch = 4;
  p.train.kimg = 4000;
  p.train.r1_gamma = 1.0;
  p.train.pl_weight = 2.0;
  p.train.style_mixing_prob = 0.9;
  p.train.ema_kimg = 10.0;
  p.train.checkpoint_every = 1000;
  return p;
}

Preset preset_by_name(const std::string& name) {
  if (name == "toy") return toy_preset();
  if (name == "paper") return paper_preset();
  fail(Errc::invalid_argument, "unknown preset '" + name + "' (expected toy or paper)");
}

void to_json(nlohmann::json& j, const GeneratorConfig& c) {
  j = {{"latent_dim", c.latent_dim},       {"mapping_layers", c.mapping_layers},
       {"mapping_lr_mult", c.mapping_lr_mult}, {"height", c.height},
       {"width", c.width},                 {"channel_base", c.channel_base},
       {"channel_max", c.channel_max}};
}

void from_json(const nlohmann::json& j, GeneratorConfig& c) {
  j.at("latent_dim").get_to(c.latent_dim);
  j.at("mapping_layers").get_to(c.mapping_layers);
  j.at("mapping_lr_mult").get_to(c.mapping_lr_mult);
  j.at("height").get_to(c.height);
  j.at("width").get_to(c.width);
  j.at("channel_base").get_to(c.channel_base);
  j.at("channel_max").get_to(c.channel_max);
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"batch", c.batch},
       {"micro_batch", c.micro_batch},
       {"steps", c.steps},
       {"kimg", c.kimg},
       {"lr_g", c.lr_g},
       {"lr_d", c.lr_d},
       {"beta1", c.beta1},
       {"beta2", c.beta2},
       {"r1_gamma", c.r1_gamma},
       {"r1_interval", c.r1_interval},
       {"pl_weight", c.pl_weight},
       {"pl_interval", c.pl_interval},
       {"style_mixing_prob", c.style_mixing_prob},
       {"ema_kimg", c.ema_kimg},
       {"augment_roll", c.augment_roll},
       {"checkpoint_every", c.checkpoint_every},
       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  j.at("batch").get_to(c.batch);
  j.at("micro_batch").get_to(c.micro_batch);
  j.at("steps").get_to(c.steps);
  j.at("kimg").get_to(c.kimg);
  j.at("lr_g").get_to(c.lr_g);
  j.at("lr_d").get_to(c.lr_d);
  j.at("beta1").get_to(c.beta1);
  j.at("beta2").get_to(c.beta2);
  j.at("r1_gamma").get_to(c.r1_gamma);
  j.at("r1_interval").get_to(c.r1_interval);
  j.at("pl_weight").get_to(c.pl_weight);
  j.at("pl_interval").get_to(c.pl_interval);
  j.at("style_mixing_prob").get_to(c.style_mixing_prob);
  j.at("ema_kimg").get_to(c.ema_kimg);
  j.at("augment_roll").get_to(c.augment_roll);
  j.at("checkpoint_every").get_to(c.checkpoint_every);
  j.at("seed").get_to(c.seed);
}

}  // namespace panolight::gan
