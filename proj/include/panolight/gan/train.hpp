#pragma once

#include <filesystem>
#include <functional>
#include <optional>

#include "panolight/data/dataset.hpp"
#include "panolight/gan/checkpoint.hpp"

namespace panolight::gan {

struct TrainLogRow {
  long long step = 0;
  double loss_g = 0;
  double loss_d = 0;
  double loss_dp = 0;
  double r1_d = 0;
  double r1_dp = 0;
};

struct TrainRequest {
  std::filesystem::path data_dir;  // holds manifest.json
  std::filesystem::path out_dir;
  Preset preset;
  /// Resume from this checkpoint. Architecture, tone map and counters come
  /// from the checkpoint; the step budget comes from `preset.train`.
  std::optional<std::filesystem::path> resume_from;
  std::function<void(const TrainLogRow&)> on_step;
};

/// Adversarial training of the shared generator against D (log(1 + psi(G))
/// vs log(1 + real HDR)) and D' (phi(G) vs clamped tone-mapped reals).
/// Writes out_dir/checkpoint.plta every checkpoint_every steps and at the
/// end, and appends to out_dir/train_log.csv. Throws divergence on a
/// non-finite loss, before any parameter update of that step.
ModelCheckpoint train(const TrainRequest& request);

/// Real tone-mapped tensors [N, 3, H, W] of one dataset split.
nn::Tensor<float> load_split_tensor(const data::DatasetManifest& manifest,
                                    const std::filesystem::path& dir, data::Split split);

struct LogitReport {
  double real_hdr = 0, fake_hdr = 0;
  double real_ldr = 0, fake_ldr = 0;
};

/// Mean logits of both discriminators on the given reals and on `count`
/// fresh samples from the live generator.
LogitReport evaluate_logits(const ModelCheckpoint& ckpt, const nn::Tensor<float>& reals, int count,
                            std::uint64_t seed);

/// R1 penalty sum_n |dD/dx_n|^2 / N on `reals`. Accumulates
/// weight / 2 * d(sum_n |dD/dx_n|^2)/d(theta) into the discriminator's
/// parameter grads without second-order backprop: a central difference
/// along the input gradient, taken with the leaky-ReLU gates of `reals`
/// frozen, which is exact for this piecewise-linear discriminator.
/// Returns the penalty value.
template <typename S>
double r1_penalty(Discriminator<S>& disc, const nn::Tensor<S>& reals, double weight);

}  // namespace panolight::gan
