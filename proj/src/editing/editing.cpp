#include "panolight/editing/editing.hpp"

#include <cmath>
#include <sstream>

#include "panolight/gan/branches.hpp"
#include "panolight/nn/optim.hpp"

namespace panolight::editing {

using nn::Tensor;
using nn::Var;

BBox parse_bbox(const std::string& text) {
  std::istringstream in(text);
  BBox b;
  char c1 = 0, c2 = 0, c3 = 0;
  in >> b.u0 >> c1 >> b.v0 >> c2 >> b.u1 >> c3 >> b.v1;
  require(in && c1 == ',' && c2 == ',' && c3 == ',' && (in >> std::ws).eof(),
          Errc::invalid_argument, "bbox must be u0,v0,u1,v1, got '" + text + "'");
  return b;
}

Mask EditSpec::resolve(int height, int width) const {
  Mask m;
  if (mask) {
    require(mask->rows() == height && mask->cols() == width, Errc::shape_mismatch,
            "edit mask does not match the panorama");
    m = *mask;
  } else {
    require(bbox.u0 >= 0 && bbox.v0 >= 0 && bbox.u1 <= width && bbox.v1 <= height,
            Errc::invalid_argument, "bbox lies outside the panorama");
    m = Mask::Constant(height, width, false);
    if (bbox.u1 > bbox.u0 && bbox.v1 > bbox.v0)
      m.block(bbox.v0, bbox.u0, bbox.v1 - bbox.v0, bbox.u1 - bbox.u0).setConstant(true);
  }
  require(m.any(), Errc::empty_mask, "edit mask is empty");
  require(!m.all(), Errc::mask_not_strict_subset, "edit mask must be a strict subset of the panorama");
  return m;
}

void EditSpec::validate(int height, int width) const {
  require(std::isfinite(delta), Errc::invalid_argument, "edit: delta must be finite");
  require(steps >= 1, Errc::invalid_argument, "edit: steps must be >= 1");
  require(lr > 0, Errc::invalid_argument, "edit: learning rate must be positive");
  resolve(height, width);
}

namespace {

Tensor<float> plane_tensor(const Mask& m, bool value) {
  Tensor<float> t({1, 1, int(m.rows()), int(m.cols())});
  for (Eigen::Index y = 0; y < m.rows(); ++y)
    for (Eigen::Index x = 0; x < m.cols(); ++x)
      t.data[y * m.cols() + x] = m(y, x) == value ? 1.f : 0.f;
  return t;
}

}  // namespace

EditResult edit_lighting(const gan::LatentState& start, const gan::Generator<float>& g_in,
                         const pano::ToneMapParams& tone_map, const EditSpec& spec,
                         const inversion::PerceptualDistance* distance) {
  const auto& cfg = g_in.config();
  spec.validate(cfg.height, cfg.width);
  require(start.w.shape == nn::Shape{1, cfg.latent_dim, 1, 1} &&
              int(start.noise.size()) == cfg.num_conv_layers(),
          Errc::shape_mismatch, "edit: latent does not match the generator");
  std::shared_ptr<const inversion::PerceptualDistance> fallback;
  if (!distance) {
    fallback = inversion::default_perceptual();
    distance = fallback.get();
  }

  gan::Generator<float> g = g_in.clone();
  g.params().set_requires_grad(false);
  EditResult result;
  result.mask = spec.resolve(cfg.height, cfg.width);
  result.before = gan::render(g, tone_map, start);

  const Mask outside = !result.mask;
  const Var<float> keep = nn::constant(plane_tensor(result.mask, false));
  const Var<float> select = nn::constant(plane_tensor(result.mask, true));
  const Tensor<float> reference =
      nn::mul(nn::constant(nn::from_image(result.before.ldr.pixels())), keep).value();
  const float intensity_scale = float(spec.delta / double(result.mask.count()));

  const gan::NoiseMaps<float> noise = gan::noise_vars(start.noise, false);
  Var<float> w = nn::parameter(start.w);
  nn::Adam<float> opt({w}, {spec.lr, 0.9, 0.999, 1e-8});
  for (int step = 0; step < spec.steps; ++step) {
    opt.zero_grad();
    const Var<float> ldr = gan::ldr_branch(g.synthesize(w, {&noise, nullptr}));
    const Var<float> kept = nn::mul(ldr, keep);
    Var<float> objective = (*distance)(kept, nn::constant(reference));
    objective = nn::add(objective, inversion::masked_l2(kept, reference, outside));
    if (spec.delta != 0)
      objective = nn::add(objective, nn::scale(nn::sum(nn::mul(ldr, select)), intensity_scale));
    inversion::append_trace(result.trace, step, objective.item(), "lighting edit");
    nn::backward(objective);
    opt.step();
  }

  result.w = w.value();
  result.after = gan::render(g, tone_map, {result.w, start.noise});
  return result;
}

EditResult add_light(const gan::LatentState& start, const gan::Generator<float>& g,
                     const pano::ToneMapParams& tone_map, const BBox& bbox,
                     const inversion::PerceptualDistance* distance) {
  EditSpec spec;
  spec.bbox = bbox;
  spec.delta = -1;
  return edit_lighting(start, g, tone_map, spec, distance);
}

EditResult remove_light(const gan::LatentState& start, const gan::Generator<float>& g,
                        const pano::ToneMapParams& tone_map, const BBox& bbox,
                        const inversion::PerceptualDistance* distance) {
  EditSpec spec;
  spec.bbox = bbox;
  spec.delta = 1;
  return edit_lighting(start, g, tone_map, spec, distance);
}

}  // namespace panolight::editing
