#pragma once

#include <filesystem>
#include <memory>
#include <vector>

#include <json.hpp>

#include "panolight/gan/checkpoint.hpp"
#include "panolight/gan/sample.hpp"
#include "panolight/inversion/perceptual.hpp"
#include "panolight/pano/masks.hpp"
#include "panolight/pano/projection.hpp"

namespace panolight::inversion {

struct HyperParams {
  double perceptual_weight = 1;  // weight of every perceptual term
  double lambda_n = 1e5;      // noise regularizer
  double lambda_l2_r = 10;    // masked L2 in pivotal tuning
  double lambda_l2_rp = 10;   // L2 of the locality regularizer
  double eta = 1;             // locality regularizer weight
  double beta_l2 = 10;        // focal L2
  double interp_alpha = 30;   // distance of w_r from w* in w space
  int steps_latent = 500;
  int steps_pivotal = 350;
  double lr_latent = 0.1;
  double lr_pivotal = 3e-4;
  double focal_fraction = 0.10;
  /// Std of the exploration noise added to w at the start of phase 1, as a
  /// fraction of the spread of w; decays to 0 at 75% of the steps.
  double initial_w_noise = 0.05;
  std::uint64_t seed = 0;

  void validate() const;
};

void to_json(nlohmann::json& j, const HyperParams& hp);
/// Missing keys keep their defaults.
void from_json(const nlohmann::json& j, HyperParams& hp);

/// Masked LDR panorama with its visibility and focal masks.
struct Observation {
  pano::LdrPanorama target;  // zero outside visibility
  pano::MaskSet masks;
};

/// Throws empty_observation if the visibility mask is empty and
/// shape_mismatch if the masks do not match the panorama.
Observation make_observation(const pano::LdrPanorama& masked, const Mask& visibility,
                             double focal_fraction = 0.10);

struct TraceRow {
  int step = 0;
  double objective = 0;
  double best = 0;  // min objective up to this step
};

/// Thrown on a non-finite objective; carries the trace up to that step.
class OptimizationDivergence : public Error {
 public:
  OptimizationDivergence(const std::string& message, std::vector<TraceRow> trace)
      : Error(Errc::divergence, message), trace_(std::move(trace)) {}
  const std::vector<TraceRow>& trace() const { return trace_; }

 private:
  std::vector<TraceRow> trace_;
};

/// Appends {step, objective, running min}; throws OptimizationDivergence
/// (with the row appended) when the objective is not finite.
void append_trace(std::vector<TraceRow>& trace, int step, double objective,
                  const std::string& phase);

/// Multi-scale shift autocorrelation: for every map and every 2x average
/// pooling down to height 4, mean(n * roll_x(n))^2 + mean(n * roll_y(n))^2.
nn::Var<float> noise_regularizer(const gan::NoiseMaps<float>& noise);

/// Mean of (pred - target)^2 over the pixels and channels selected by `mask`.
nn::Var<float> masked_l2(const nn::Var<float>& pred, const nn::Tensor<float>& target,
                         const Mask& mask);

/// Same, on images; pred is clamped to [0, 1] first.
double masked_mse(const ImageF& pred, const ImageF& target, const Mask& mask);

struct LatentFit {
  gan::LatentState latent;  // w*, n*
  std::vector<TraceRow> trace;
};

/// Phase 1: Adam over (w, n) from w = w_avg and seeded white noise, minimizing
/// d(M * phi(G), target) + lambda_n * L_n(n) + beta_l2 * L2 on the focal mask.
/// Learning rate ramps up over the first 5% and down over the last 25% of
/// the steps; noise maps are renormalized after every step.
LatentFit invert_latent(const Observation& obs, const gan::Generator<float>& g,
                        const HyperParams& hp, const PerceptualDistance& distance);

struct PivotalFit {
  gan::Generator<float> generator;  // theta*
  std::vector<TraceRow> trace;
};

/// Phase 2: Adam over the synthesis weights with (w*, n*) fixed, minimizing
/// the masked perceptual + lambda_l2_r masked L2 + beta_l2 focal L2 terms plus
/// eta times the locality regularizer at w_r = w* + alpha (w_z - w*) / |w_z - w*|
/// against the untouched `g0`.
PivotalFit pivotal_finetune(const gan::LatentState& pivot, const Observation& obs,
                            const gan::Generator<float>& g0, const HyperParams& hp,
                            const PerceptualDistance& distance);

struct InversionResult {
  gan::LatentState latent;
  gan::Generator<float> generator;
  std::vector<TraceRow> trace_latent;
  std::vector<TraceRow> trace_pivotal;
  pano::HdrPanorama hdr_out;  // psi(G(w*, n*; theta*))
  pano::LdrPanorama ldr_out;  // phi of the same pass
};

/// Both phases on the checkpoint's moving-average generator. The checkpoint
/// is not modified. `distance` defaults to default_perceptual().
InversionResult invert_observation(const Observation& obs, const gan::ModelCheckpoint& ckpt,
                                   const HyperParams& hp,
                                   const PerceptualDistance* distance = nullptr);

/// crop -> masked panorama -> focal mask -> both phases -> psi output.
InversionResult estimate_lighting(const ImageF& crop, const pano::CameraSpec& cam,
                                  const gan::ModelCheckpoint& ckpt, const HyperParams& hp,
                                  const PerceptualDistance* distance = nullptr);

/// Writes hdr_out.hdr, ldr_out.ppm, latent.plta (w*, n*), theta.plta (a
/// checkpoint whose moving-average generator is theta*) and traces.csv
/// (phase, step, objective, best) into `dir`.
void save_result(const InversionResult& result, const gan::ModelCheckpoint& source,
                 const std::filesystem::path& dir);

}  // namespace panolight::inversion
