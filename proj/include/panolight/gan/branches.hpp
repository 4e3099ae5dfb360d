#pragma once

#include "panolight/nn/ops.hpp"
#include "panolight/pano/tonemap.hpp"

namespace panolight::gan {

/// psi on a graph value: max(raw, 0)^gamma / alpha^gamma.
template <typename S>
nn::Var<S> hdr_branch(const nn::Var<S>& raw, const pano::ToneMapParams& p) {
  return nn::scale(nn::pow_pos(raw, S(p.gamma)), S(std::pow(p.alpha, -p.gamma)));
}

/// phi on a graph value: clamp to [0, 1].
template <typename S>
nn::Var<S> ldr_branch(const nn::Var<S>& raw) {
  return nn::clamp(raw, S(0), S(1));
}

/// What the HDR discriminator sees: log(1 + psi(raw)).
template <typename S>
nn::Var<S> hdr_disc_input(const nn::Var<S>& raw, const pano::ToneMapParams& p) {
  return nn::log1p(hdr_branch(raw, p));
}

}  // namespace panolight::gan
