#pragma once

#include <optional>
#include <vector>

#include "panolight/gan/sample.hpp"
#include "panolight/inversion/inversion.hpp"

namespace panolight::editing {

/// Half-open pixel rectangle [u0, u1) x [v0, v1); u is the column, v the row.
struct BBox {
  int u0 = 0, v0 = 0, u1 = 0, v1 = 0;
};

/// Parses "u0,v0,u1,v1". Throws invalid_argument.
BBox parse_bbox(const std::string& text);

struct EditSpec {
  BBox bbox;
  /// Overrides bbox when set.
  std::optional<Mask> mask;
  /// Positive dims the masked region, negative brightens it.
  double delta = 1.0;
  int steps = 200;
  double lr = 0.02;

  /// The edit mask on an H x W panorama. Throws invalid_argument for a box
  /// outside the panorama, empty_mask if nothing is selected and
  /// mask_not_strict_subset if everything is.
  Mask resolve(int height, int width) const;
  void validate(int height, int width) const;
};

struct EditResult {
  nn::Tensor<float> w;  // w*; noise and weights are those of the input
  std::vector<inversion::TraceRow> trace;
  Mask mask;
  gan::PanoSample before;
  gan::PanoSample after;
};

/// Adam over w only, starting at w0, minimizing
///   d((1 - M) phi(G(w)), (1 - M) phi(G(w0))) + L2 over (1 - M)
///   + delta / |M| * sum M phi(G(w)).
/// The generator and the noise maps are never written.
EditResult edit_lighting(const gan::LatentState& start, const gan::Generator<float>& g,
                         const pano::ToneMapParams& tone_map, const EditSpec& spec,
                         const inversion::PerceptualDistance* distance = nullptr);

/// edit_lighting with delta = -1 over `bbox`.
EditResult add_light(const gan::LatentState& start, const gan::Generator<float>& g,
                     const pano::ToneMapParams& tone_map, const BBox& bbox,
                     const inversion::PerceptualDistance* distance = nullptr);
/// edit_lighting with delta = +1 over `bbox`.
EditResult remove_light(const gan::LatentState& start, const gan::Generator<float>& g,
                        const pano::ToneMapParams& tone_map, const BBox& bbox,
                        const inversion::PerceptualDistance* distance = nullptr);

}  // namespace panolight::editing
