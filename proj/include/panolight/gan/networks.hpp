#pragma once

#include <string>
#include <utility>
#include <vector>

#include "panolight/core/rng.hpp"
#include "panolight/gan/config.hpp"
#include "panolight/nn/ops.hpp"

namespace panolight::gan {

/// One [1, 1, h, w] map per synthesis conv layer, shared across a batch.
template <typename S>
using NoiseMaps = std::vector<nn::Var<S>>;

/// Noise for a synthesis pass: explicit maps if set, otherwise fresh
/// per-sample white noise from `rng` if set, otherwise none.
template <typename S>
struct NoiseSource {
  const NoiseMaps<S>* maps = nullptr;
  Rng* rng = nullptr;
};

/// Ordered, named parameters of one network.
template <typename S>
class ParamSet {
 public:
  ParamSet() = default;
  ParamSet(const ParamSet&) = delete;
  ParamSet& operator=(const ParamSet&) = delete;
  ParamSet(ParamSet&&) noexcept = default;
  ParamSet& operator=(ParamSet&&) noexcept = default;

  nn::Var<S> add(const std::string& name, nn::Tensor<S> init);

  const std::vector<std::pair<std::string, nn::Var<S>>>& items() const { return items_; }
  std::vector<nn::Var<S>> vars(const std::string& prefix = "") const;
  void set_requires_grad(bool on);
  void zero_grad();
  /// Copies values from a set with identical names and shapes.
  void copy_from(const ParamSet& other);
  /// this = other + beta * (this - other).
  void ema_toward(const ParamSet& other, S beta);

 private:
  std::vector<std::pair<std::string, nn::Var<S>>> items_;
};

/// Style-based generator: 8-layer mapping network, 4x8 learned constant,
/// two style-modulated 3x3 convs per level with noise injection, and
/// skip-connected toRGB outputs. Convs wrap around horizontally.
template <typename S>
class Generator {
 public:
  Generator(const GeneratorConfig& config, std::uint64_t seed);

  const GeneratorConfig& config() const { return config_; }
  /// Deep copy; the result shares no parameter storage with this one.
  Generator clone() const;

  /// z: [N, latent, 1, 1] -> w: [N, latent, 1, 1].
  nn::Var<S> mapping(const nn::Var<S>& z) const;

  /// One style vector per entry of num_ws(). Output [N, 3, H, W] in the
  /// tone-mapped domain (unbounded; psi/phi map it to HDR/LDR).
  nn::Var<S> synthesize(const std::vector<nn::Var<S>>& ws, const NoiseSource<S>& noise,
                        nn::LeakyGates* gates = nullptr) const;
  /// Same w for every layer.
  nn::Var<S> synthesize(const nn::Var<S>& w, const NoiseSource<S>& noise,
                        nn::LeakyGates* gates = nullptr) const;

  nn::Shape noise_shape(int layer) const;
  /// Fresh unit white noise, one constant map per layer.
  NoiseMaps<S> random_noise(Rng& rng) const;

  ParamSet<S>& params() { return params_; }
  const ParamSet<S>& params() const { return params_; }
  std::vector<nn::Var<S>> mapping_parameters() const { return params_.vars("mapping."); }
  std::vector<nn::Var<S>> synthesis_parameters() const { return params_.vars("synthesis."); }

  /// Mean of mapping(z) over random z, [1, latent, 1, 1].
  nn::Tensor<S> w_avg;
  void estimate_w_avg(int samples, std::uint64_t seed);

 private:
  struct StyledConv {
    nn::Var<S> affine_w, affine_b, weight, noise_strength, bias;
    int cin = 0;
    bool up = false;
  };
  struct ToRgb {
    nn::Var<S> affine_w, affine_b, weight, bias;
    int cin = 0;
  };

  nn::Var<S> styled_conv(const StyledConv& layer, nn::Var<S> x, const nn::Var<S>& w,
                         const nn::Var<S>* noise, nn::LeakyGates* gates) const;
  nn::Var<S> to_rgb(const ToRgb& layer, const nn::Var<S>& x, const nn::Var<S>& w) const;

  GeneratorConfig config_;
  ParamSet<S> params_;
  std::vector<std::pair<nn::Var<S>, nn::Var<S>>> mapping_;
  nn::Var<S> const_input_;
  std::vector<StyledConv> convs_;
  std::vector<ToRgb> torgb_;
};

/// Residual discriminator mirroring the generator's channel schedule.
/// Input [N, 3, H, W], output logits [N, 1, 1, 1]. Samples are scored
/// independently (no cross-batch statistics).
template <typename S>
class Discriminator {
 public:
  Discriminator(const GeneratorConfig& config, std::uint64_t seed);

  nn::Var<S> operator()(const nn::Var<S>& img, nn::LeakyGates* gates = nullptr) const;
  Discriminator clone() const;

  ParamSet<S>& params() { return params_; }
  const ParamSet<S>& params() const { return params_; }

 private:
  struct Block {
    nn::Var<S> conv0_w, conv0_b, conv1_w, conv1_b, skip_w;
    int cin = 0, cout = 0;
  };

  GeneratorConfig config_;
  ParamSet<S> params_;
  nn::Var<S> from_rgb_w_, from_rgb_b_;
  std::vector<Block> blocks_;
  nn::Var<S> epi_conv_w_, epi_conv_b_, fc_w_, fc_b_, out_w_, out_b_;
};

}  // namespace panolight::gan
