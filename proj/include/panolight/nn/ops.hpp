#pragma once

#include <memory>
#include <vector>

#include "panolight/nn/autograd.hpp"

/// Differentiable tensor ops. Spatial ops treat the last axis as periodic
/// (panorama longitude) and clamp or zero-pad the vertical axis.
namespace panolight::nn {

/// Elementwise with broadcasting: each axis must match or be 1 on one side.
template <typename S> Var<S> add(const Var<S>& a, const Var<S>& b);
template <typename S> Var<S> sub(const Var<S>& a, const Var<S>& b);
template <typename S> Var<S> mul(const Var<S>& a, const Var<S>& b);

template <typename S> Var<S> scale(const Var<S>& a, S factor);
template <typename S> Var<S> shift(const Var<S>& a, S offset);
template <typename S> Var<S> square(const Var<S>& a);
/// sqrt(max(a, 0) + eps).
template <typename S> Var<S> sqrt_eps(const Var<S>& a, S eps);
/// max(a, 0)^p. The derivative at 0 is taken as 0.
template <typename S> Var<S> pow_pos(const Var<S>& a, S p);
template <typename S> Var<S> log1p(const Var<S>& a);
/// Derivative is 1 strictly inside (lo, hi) and 0 elsewhere.
template <typename S> Var<S> clamp(const Var<S>& a, S lo, S hi);
template <typename S> Var<S> relu(const Var<S>& a);
template <typename S> Var<S> softplus(const Var<S>& a);

/// Reductions to a [1, 1, 1, 1] tensor.
template <typename S> Var<S> sum(const Var<S>& a);
template <typename S> Var<S> mean(const Var<S>& a);

template <typename S> Var<S> reshape(const Var<S>& a, const Shape& shape);

/// x: [N, Cin, 1, 1], w: [Cout, Cin, 1, 1] -> gain * w x, [N, Cout, 1, 1].
template <typename S> Var<S> linear(const Var<S>& x, const Var<S>& w, S gain);

/// Stride-1 "same" convolution with an odd square kernel w: [O, C, k, k].
/// Columns wrap around, rows are zero-padded.
template <typename S> Var<S> conv2d(const Var<S>& x, const Var<S>& w, S gain);

/// Sign pattern of every leaky ReLU in a forward pass. A recording pass
/// stores one gate per activation call; a replaying pass applies the stored
/// gates in the same order, so its activations are linear in their inputs.
class LeakyGates {
 public:
  enum class Mode { record, replay };

  explicit LeakyGates(Mode mode = Mode::record) : mode_(mode) {}
  Mode mode() const { return mode_; }
  /// Switches to replay from the first gate.
  void replay() {
    mode_ = Mode::replay;
    next_ = 0;
  }
  std::size_t size() const { return gates_.size(); }

  void push(Eigen::Array<bool, Eigen::Dynamic, 1> gate) { gates_.push_back(std::move(gate)); }
  /// Throws shape_mismatch when the pass diverges from the recorded one.
  const Eigen::Array<bool, Eigen::Dynamic, 1>& next(Eigen::Index size);

 private:
  Mode mode_;
  std::vector<Eigen::Array<bool, Eigen::Dynamic, 1>> gates_;
  std::size_t next_ = 0;
};

/// (x + bias_gain * b) followed by optional leaky ReLU (slope 0.2), times act_gain.
/// b: [1, C, 1, 1]. With `gates`, the leaky ReLU records or replays its sign
/// pattern.
template <typename S>
Var<S> bias_act(const Var<S>& x, const Var<S>& b, S bias_gain, bool leaky, S act_gain,
                LeakyGates* gates = nullptr);

/// Demodulation coefficients for style-modulated convolution:
/// d[n, o] = (gain^2 * sum_{c,k} (w[o, c, k] * s[n, c])^2 + eps)^(-1/2), shape [N, O, 1, 1].
template <typename S> Var<S> demod_coeff(const Var<S>& w, const Var<S>& s, S gain, S eps);

/// Bilinear 2x upsampling (half-pixel centres).
template <typename S> Var<S> upsample2x(const Var<S>& x);
/// 2x2 average pooling; H and W must be even.
template <typename S> Var<S> downsample2x(const Var<S>& x);
/// 3x3 box mean.
template <typename S> Var<S> box_filter3(const Var<S>& x);
/// Circular shift: out[y][x] = in[y - dy][x - dx] (indices mod H, W).
template <typename S> Var<S> roll(const Var<S>& x, int dy, int dx);

/// Per sample: x / sqrt(mean(x^2) + eps) over all non-batch elements.
template <typename S> Var<S> normalize_2nd_moment(const Var<S>& x, S eps = S(1e-8));
/// Per pixel: x / sqrt(sum_c x^2 + eps).
template <typename S> Var<S> channel_normalize(const Var<S>& x, S eps = S(1e-10));

}  // namespace panolight::nn
