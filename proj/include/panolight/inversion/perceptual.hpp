#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "panolight/core/image.hpp"
#include "panolight/nn/ops.hpp"

namespace panolight::inversion {

/// Differentiable image distance on [N, 3, H, W] batches in [0, 1].
/// d(a, a) = 0, d(a, b) = d(b, a), d(a, b) > 0 for a != b.
class PerceptualDistance {
 public:
  virtual ~PerceptualDistance() = default;
  /// Mean over the batch; scalar [1, 1, 1, 1].
  virtual nn::Var<float> operator()(const nn::Var<float>& a, const nn::Var<float>& b) const = 0;
  virtual std::string name() const = 0;

  double distance(const ImageF& a, const ImageF& b) const;
};

/// Learned-weight-free fallback. At each dyadic scale down to height 4, sums
/// the mean squared differences of pixels, 3x3 local means and 3x3 local
/// standard deviations, then averages over scales.
class PatchStatsDistance final : public PerceptualDistance {
 public:
  nn::Var<float> operator()(const nn::Var<float>& a, const nn::Var<float>& b) const override;
  std::string name() const override { return "patch-stats"; }
};

/// LPIPS-style feature distance: a stack of 3x3 conv + leaky ReLU layers on
/// 2x - 1, unit-normalized channels per layer, squared differences weighted
/// by nonnegative per-channel weights, spatial mean, summed over layers.
///
/// Archive layout ("panolight-perceptual"): conv<i>.weight [O, C, 3, 3],
/// conv<i>.bias [1, O, 1, 1], lin<i> [1, O, 1, 1]; metadata "pool_after"
/// lists the layers followed by 2x average pooling.
class FeatureDistance final : public PerceptualDistance {
 public:
  static FeatureDistance load(const std::filesystem::path& path);

  nn::Var<float> operator()(const nn::Var<float>& a, const nn::Var<float>& b) const override;
  std::string name() const override { return "feature:" + source_; }

 private:
  struct Layer {
    nn::Var<float> weight, bias, lin;
    bool pool = false;
  };
  std::vector<Layer> layers_;
  std::string source_;
};

/// File name looked up under $STYLELIGHT_CACHE.
inline constexpr const char* kPerceptualWeightsFile = "perceptual.plta";

/// FeatureDistance from $STYLELIGHT_CACHE/perceptual.plta when that file
/// exists, PatchStatsDistance otherwise.
std::shared_ptr<const PerceptualDistance> default_perceptual();

}  // namespace panolight::inversion
