#include "panolight/nn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

namespace panolight::nn {
namespace {

template <typename S>
using Arr = typename Tensor<S>::Array;
template <typename S>
using RowMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using ColMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;

// Element strides of `s` viewed inside `out`; 0 on broadcast axes.
std::array<Eigen::Index, 4> broadcast_strides(const Shape& s, const Shape& out) {
  std::array<Eigen::Index, 4> st{};
  Eigen::Index stride = 1;
  for (int d = 3; d >= 0; --d) {
    st[std::size_t(d)] = (s[std::size_t(d)] == 1 && out[std::size_t(d)] != 1) ? 0 : stride;
    stride *= s[std::size_t(d)];
  }
  return st;
}

Shape broadcast_shape(const Shape& a, const Shape& b) {
  Shape out{};
  for (std::size_t d = 0; d < 4; ++d) {
    if (a[d] == b[d] || b[d] == 1)
      out[d] = a[d];
    else if (a[d] == 1)
      out[d] = b[d];
    else
      fail(Errc::shape_mismatch, "cannot broadcast " + to_string(a) + " with " + to_string(b));
  }
  return out;
}

// Calls f(i_out, i_a, i_b) for every output element.
template <typename F>
void for_each_broadcast(const Shape& out, const std::array<Eigen::Index, 4>& sa,
                        const std::array<Eigen::Index, 4>& sb, F&& f) {
  Eigen::Index i = 0;
  for (int n = 0; n < out[0]; ++n)
    for (int c = 0; c < out[1]; ++c)
      for (int y = 0; y < out[2]; ++y) {
        const Eigen::Index ia = n * sa[0] + c * sa[1] + y * sa[2];
        const Eigen::Index ib = n * sb[0] + c * sb[1] + y * sb[2];
        for (int x = 0; x < out[3]; ++x, ++i) f(i, ia + x * sa[3], ib + x * sb[3]);
      }
}

enum class BinOp { add, sub, mul };

template <typename S>
Var<S> binary(const Var<S>& a, const Var<S>& b, BinOp op) {
  const Tensor<S>& av = a.value();
  const Tensor<S>& bv = b.value();
  if (av.shape == bv.shape) {
    Tensor<S> out(av.shape);
    switch (op) {
      case BinOp::add: out.data = av.data + bv.data; break;
      case BinOp::sub: out.data = av.data - bv.data; break;
      case BinOp::mul: out.data = av.data * bv.data; break;
    }
    return make_result<S>(std::move(out), {a, b}, [op](Node<S>& self) {
      auto& pa = *self.parents[0];
      auto& pb = *self.parents[1];
      const Arr<S>& g = self.grad.data;
      if (pa.requires_grad) {
        if (op == BinOp::mul)
          pa.grad_data() += g * pb.value.data;
        else
          pa.grad_data() += g;
      }
      if (pb.requires_grad) {
        if (op == BinOp::mul)
          pb.grad_data() += g * pa.value.data;
        else if (op == BinOp::sub)
          pb.grad_data() -= g;
        else
          pb.grad_data() += g;
      }
    });
  }

  const Shape shape = broadcast_shape(av.shape, bv.shape);
  const auto sa = broadcast_strides(av.shape, shape);
  const auto sb = broadcast_strides(bv.shape, shape);
  Tensor<S> out(shape);
  const S* pa = av.data.data();
  const S* pb = bv.data.data();
  S* po = out.data.data();
  switch (op) {
    case BinOp::add:
      for_each_broadcast(shape, sa, sb, [&](auto i, auto ia, auto ib) { po[i] = pa[ia] + pb[ib]; });
      break;
    case BinOp::sub:
      for_each_broadcast(shape, sa, sb, [&](auto i, auto ia, auto ib) { po[i] = pa[ia] - pb[ib]; });
      break;
    case BinOp::mul:
      for_each_broadcast(shape, sa, sb, [&](auto i, auto ia, auto ib) { po[i] = pa[ia] * pb[ib]; });
      break;
  }
  return make_result<S>(std::move(out), {a, b}, [op, shape, sa, sb](Node<S>& self) {
    auto& na = *self.parents[0];
    auto& nb = *self.parents[1];
    const S* g = self.grad.data.data();
    if (na.requires_grad) {
      S* ga = na.grad_data().data();
      const S* vb = nb.value.data.data();
      if (op == BinOp::mul)
        for_each_broadcast(shape, sa, sb, [&](auto i, auto ia, auto ib) { ga[ia] += g[i] * vb[ib]; });
      else
        for_each_broadcast(shape, sa, sb, [&](auto i, auto ia, auto) { ga[ia] += g[i]; });
    }
    if (nb.requires_grad) {
      S* gb = nb.grad_data().data();
      const S* va = na.value.data.data();
      if (op == BinOp::mul)
        for_each_broadcast(shape, sa, sb, [&](auto i, auto ia, auto ib) { gb[ib] += g[i] * va[ia]; });
      else if (op == BinOp::sub)
        for_each_broadcast(shape, sa, sb, [&](auto i, auto, auto ib) { gb[ib] -= g[i]; });
      else
        for_each_broadcast(shape, sa, sb, [&](auto i, auto, auto ib) { gb[ib] += g[i]; });
    }
  });
}

// Elementwise op whose derivative is a function of input and output.
template <typename S, typename F, typename DF>
Var<S> unary(const Var<S>& a, F f, DF df) {
  Tensor<S> out(a.shape());
  out.data = a.value().data.unaryExpr(f);
  return make_result<S>(std::move(out), {a}, [df](Node<S>& self) {
    auto& p = *self.parents[0];
    Arr<S>& gp = p.grad_data();
    const Arr<S>& g = self.grad.data;
    for (Eigen::Index i = 0; i < g.size(); ++i) gp[i] += g[i] * df(p.value.data[i], self.value.data[i]);
  });
}

// Separable linear resampling: out[y][x] = sum_ij wy[y,i] wx[x,j] in[iy][ix].
struct Taps {
  int out = 0;
  int k = 0;
  std::vector<int> idx;     // out * k
  std::vector<double> wt;   // out * k
};

int wrap(int i, int n) { return ((i % n) + n) % n; }
int clampi(int i, int n) { return std::clamp(i, 0, n - 1); }

Taps upsample_taps(int n, bool periodic) {
  Taps t{2 * n, 2, {}, {}};
  for (int j = 0; j < 2 * n; ++j) {
    const int i = j / 2;
    const int other = (j % 2 == 0) ? i - 1 : i + 1;
    t.idx.push_back(i);
    t.idx.push_back(periodic ? wrap(other, n) : clampi(other, n));
    t.wt.push_back(0.75);
    t.wt.push_back(0.25);
  }
  return t;
}

Taps downsample_taps(int n) {
  Taps t{n / 2, 2, {}, {}};
  for (int j = 0; j < n / 2; ++j) {
    t.idx.insert(t.idx.end(), {2 * j, 2 * j + 1});
    t.wt.insert(t.wt.end(), {0.5, 0.5});
  }
  return t;
}

Taps box_taps(int n, bool periodic) {
  Taps t{n, 3, {}, {}};
  for (int j = 0; j < n; ++j)
    for (int d = -1; d <= 1; ++d) {
      t.idx.push_back(periodic ? wrap(j + d, n) : clampi(j + d, n));
      t.wt.push_back(1.0 / 3.0);
    }
  return t;
}

template <typename S>
void resample_plane(const S* in, int h, int w, const Taps& ty, const Taps& tx, S* out, S* tmp) {
  // Horizontal pass into tmp [h, tx.out], then vertical pass into out.
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < tx.out; ++x) {
      S acc = 0;
      for (int k = 0; k < tx.k; ++k)
        acc += S(tx.wt[std::size_t(x * tx.k + k)]) * in[y * w + tx.idx[std::size_t(x * tx.k + k)]];
      tmp[y * tx.out + x] = acc;
    }
  for (int y = 0; y < ty.out; ++y) {
    S* row = out + Eigen::Index(y) * tx.out;
    std::fill(row, row + tx.out, S(0));
    for (int k = 0; k < ty.k; ++k) {
      const S wgt = S(ty.wt[std::size_t(y * ty.k + k)]);
      const S* src = tmp + Eigen::Index(ty.idx[std::size_t(y * ty.k + k)]) * tx.out;
      for (int x = 0; x < tx.out; ++x) row[x] += wgt * src[x];
    }
  }
}

template <typename S>
void resample_plane_adjoint(const S* g, int h, int w, const Taps& ty, const Taps& tx, S* gin,
                            S* tmp) {
  std::fill(tmp, tmp + Eigen::Index(h) * tx.out, S(0));
  for (int y = 0; y < ty.out; ++y) {
    const S* row = g + Eigen::Index(y) * tx.out;
    for (int k = 0; k < ty.k; ++k) {
      const S wgt = S(ty.wt[std::size_t(y * ty.k + k)]);
      S* dst = tmp + Eigen::Index(ty.idx[std::size_t(y * ty.k + k)]) * tx.out;
      for (int x = 0; x < tx.out; ++x) dst[x] += wgt * row[x];
    }
  }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < tx.out; ++x) {
      const S gv = tmp[y * tx.out + x];
      for (int k = 0; k < tx.k; ++k)
        gin[y * w + tx.idx[std::size_t(x * tx.k + k)]] += S(tx.wt[std::size_t(x * tx.k + k)]) * gv;
    }
}

template <typename S>
Var<S> resample(const Var<S>& x, Taps ty, Taps tx) {
  const Shape in = x.shape();
  const Shape os{in[0], in[1], ty.out, tx.out};
  Tensor<S> out(os);
  std::vector<S> tmp(std::size_t(in[2]) * std::size_t(tx.out));
  const Eigen::Index planes = Eigen::Index(in[0]) * in[1];
  const Eigen::Index ip = Eigen::Index(in[2]) * in[3];
  const Eigen::Index op = Eigen::Index(os[2]) * os[3];
  for (Eigen::Index p = 0; p < planes; ++p)
    resample_plane(x.value().data.data() + p * ip, in[2], in[3], ty, tx, out.data.data() + p * op,
                   tmp.data());
  return make_result<S>(std::move(out), {x}, [ty, tx, in, os, planes, ip, op](Node<S>& self) {
    auto& px = *self.parents[0];
    S* gx = px.grad_data().data();
    std::vector<S> tmp(std::size_t(in[2]) * std::size_t(tx.out));
    for (Eigen::Index p = 0; p < planes; ++p)
      resample_plane_adjoint(self.grad.data.data() + p * op, in[2], in[3], ty, tx, gx + p * ip,
                             tmp.data());
  });
}

// dst[x] = src[(x + dx) mod w], as at most two contiguous copies.
template <typename S>
void shifted_copy(const S* src, S* dst, int w, int dx) {
  const int d = wrap(dx, w);
  std::copy(src + d, src + w, dst);
  std::copy(src, src + d, dst + (w - d));
}

// dst[(x + dx) mod w] += src[x].
template <typename S>
void shifted_add(const S* src, S* dst, int w, int dx) {
  const int d = wrap(dx, w);
  for (int x = 0; x < w - d; ++x) dst[x + d] += src[x];
  for (int x = w - d; x < w; ++x) dst[x + d - w] += src[x];
}

// im2col for `count` samples starting at n0: rows (c, ky, kx), columns (n, y, x).
template <typename S>
void im2col(const Tensor<S>& x, int n0, int count, int k, S* cols) {
  const int C = x.c(), H = x.h(), W = x.w(), p = k / 2;
  const Eigen::Index P = Eigen::Index(count) * H * W;
  for (int c = 0; c < C; ++c)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        S* row = cols + (Eigen::Index(c * k + ky) * k + kx) * P;
        const int dy = ky - p, dx = kx - p;
        for (int n = 0; n < count; ++n) {
          const S* plane = x.data.data() + x.index(n0 + n, c, 0, 0);
          for (int y = 0; y < H; ++y) {
            S* dst = row + (Eigen::Index(n) * H + y) * W;
            const int sy = y + dy;
            if (sy < 0 || sy >= H) {
              std::fill(dst, dst + W, S(0));
              continue;
            }
            const S* src = plane + Eigen::Index(sy) * W;
            shifted_copy(src, dst, W, dx);
          }
        }
      }
}

template <typename S>
void col2im(const S* cols, int n0, int count, int k, Tensor<S>& gx) {
  const int C = gx.c(), H = gx.h(), W = gx.w(), p = k / 2;
  const Eigen::Index P = Eigen::Index(count) * H * W;
  for (int c = 0; c < C; ++c)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        const S* row = cols + (Eigen::Index(c * k + ky) * k + kx) * P;
        const int dy = ky - p, dx = kx - p;
        for (int n = 0; n < count; ++n) {
          S* plane = gx.data.data() + gx.index(n0 + n, c, 0, 0);
          for (int y = 0; y < H; ++y) {
            const int sy = y + dy;
            if (sy < 0 || sy >= H) continue;
            const S* src = row + (Eigen::Index(n) * H + y) * W;
            S* dst = plane + Eigen::Index(sy) * W;
            shifted_add(src, dst, W, dx);
          }
        }
      }
}

// Reused scratch buffers; fresh multi-megabyte allocations per call cost
// more in page faults than the copies themselves.
template <typename S>
S* workspace(int slot, Eigen::Index size) {
  thread_local std::array<std::vector<S>, 2> buffers;
  auto& b = buffers[std::size_t(slot)];
  if (Eigen::Index(b.size()) < size) b.resize(std::size_t(size));
  return b.data();
}

// Samples per im2col chunk, bounding the column buffer to ~32M elements.
int conv_chunk(const Shape& xs, int k) {
  const Eigen::Index per = Eigen::Index(xs[1]) * k * k * xs[2] * xs[3];
  return int(std::clamp<Eigen::Index>((Eigen::Index(1) << 25) / std::max<Eigen::Index>(per, 1), 1,
                                      xs[0]));
}

}  // namespace

template <typename S> Var<S> add(const Var<S>& a, const Var<S>& b) { return binary(a, b, BinOp::add); }
template <typename S> Var<S> sub(const Var<S>& a, const Var<S>& b) { return binary(a, b, BinOp::sub); }
template <typename S> Var<S> mul(const Var<S>& a, const Var<S>& b) { return binary(a, b, BinOp::mul); }

template <typename S>
Var<S> scale(const Var<S>& a, S factor) {
  return unary(a, [factor](S v) { return v * factor; }, [factor](S, S) { return factor; });
}

template <typename S>
Var<S> shift(const Var<S>& a, S offset) {
  return unary(a, [offset](S v) { return v + offset; }, [](S, S) { return S(1); });
}

template <typename S>
Var<S> square(const Var<S>& a) {
  return unary(a, [](S v) { return v * v; }, [](S v, S) { return 2 * v; });
}

template <typename S>
Var<S> sqrt_eps(const Var<S>& a, S eps) {
  return unary(
      a, [eps](S v) { return std::sqrt(std::max(v, S(0)) + eps); },
      [](S v, S y) { return v > 0 ? S(0.5) / y : S(0); });
}

template <typename S>
Var<S> pow_pos(const Var<S>& a, S p) {
  return unary(
      a, [p](S v) { return v > 0 ? std::pow(v, p) : S(0); },
      [p](S v, S y) { return v > 0 ? p * y / v : S(0); });
}

template <typename S>
Var<S> log1p(const Var<S>& a) {
  return unary(a, [](S v) { return std::log1p(v); }, [](S v, S) { return S(1) / (S(1) + v); });
}

template <typename S>
Var<S> clamp(const Var<S>& a, S lo, S hi) {
  return unary(
      a, [lo, hi](S v) { return std::clamp(v, lo, hi); },
      [lo, hi](S v, S) { return (v > lo && v < hi) ? S(1) : S(0); });
}

template <typename S>
Var<S> relu(const Var<S>& a) {
  return unary(a, [](S v) { return v > 0 ? v : S(0); }, [](S v, S) { return v > 0 ? S(1) : S(0); });
}

template <typename S>
Var<S> softplus(const Var<S>& a) {
  return unary(
      a, [](S v) { return std::max(v, S(0)) + std::log1p(std::exp(-std::abs(v))); },
      [](S v, S) { return S(1) / (S(1) + std::exp(-v)); });
}

template <typename S>
Var<S> sum(const Var<S>& a) {
  Tensor<S> out({1, 1, 1, 1}, a.value().data.sum());
  return make_result<S>(std::move(out), {a}, [](Node<S>& self) {
    self.parents[0]->grad_data() += self.grad.data[0];
  });
}

template <typename S>
Var<S> mean(const Var<S>& a) {
  const S inv = S(1) / S(std::max<Eigen::Index>(a.value().size(), 1));
  return scale(sum(a), inv);
}

template <typename S>
Var<S> reshape(const Var<S>& a, const Shape& shape) {
  require(numel(shape) == a.value().size(), Errc::shape_mismatch,
          "reshape " + to_string(a.shape()) + " to " + to_string(shape));
  Tensor<S> out(shape, a.value().data);
  return make_result<S>(std::move(out), {a}, [](Node<S>& self) {
    self.parents[0]->grad_data() += self.grad.data;
  });
}

template <typename S>
Var<S> linear(const Var<S>& x, const Var<S>& w, S gain) {
  const Shape xs = x.shape(), ws = w.shape();
  require(xs[2] == 1 && xs[3] == 1 && ws[2] == 1 && ws[3] == 1 && ws[1] == xs[1],
          Errc::shape_mismatch, "linear: x " + to_string(xs) + " w " + to_string(ws));
  const int N = xs[0], Cin = xs[1], Cout = ws[0];
  Tensor<S> out({N, Cout, 1, 1});
  using CMap = Eigen::Map<const ColMat<S>>;
  using WMap = Eigen::Map<const RowMat<S>>;
  Eigen::Map<ColMat<S>>(out.data.data(), Cout, N).noalias() =
      gain * (WMap(w.value().data.data(), Cout, Cin) * CMap(x.value().data.data(), Cin, N));
  return make_result<S>(std::move(out), {x, w}, [N, Cin, Cout, gain](Node<S>& self) {
    auto& px = *self.parents[0];
    auto& pw = *self.parents[1];
    Eigen::Map<const ColMat<S>> g(self.grad.data.data(), Cout, N);
    if (px.requires_grad)
      Eigen::Map<ColMat<S>>(px.grad_data().data(), Cin, N).noalias() +=
          gain * (WMap(pw.value.data.data(), Cout, Cin).transpose() * g);
    if (pw.requires_grad)
      Eigen::Map<RowMat<S>>(pw.grad_data().data(), Cout, Cin).noalias() +=
          gain * (g * CMap(px.value.data.data(), Cin, N).transpose());
  });
}

template <typename S>
Var<S> conv2d(const Var<S>& x, const Var<S>& w, S gain) {
  const Shape xs = x.shape(), ws = w.shape();
  require(ws[1] == xs[1] && ws[2] == ws[3] && ws[2] % 2 == 1, Errc::shape_mismatch,
          "conv2d: x " + to_string(xs) + " w " + to_string(ws));
  const int N = xs[0], C = xs[1], H = xs[2], W = xs[3], O = ws[0], k = ws[2];
  const Eigen::Index HW = Eigen::Index(H) * W, K = Eigen::Index(C) * k * k;
  Tensor<S> out({N, O, H, W});
  Eigen::Map<const RowMat<S>> wm(w.value().data.data(), O, K);
  const int chunk = conv_chunk(xs, k);

  if (k == 1) {
    for (int n = 0; n < N; ++n)
      Eigen::Map<RowMat<S>>(out.sample(n), O, HW).noalias() =
          gain * (wm * Eigen::Map<const RowMat<S>>(x.value().sample(n), C, HW));
  } else {
    S* cols = workspace<S>(0, K * chunk * HW);
    S* res = workspace<S>(1, O * chunk * HW);
    for (int n0 = 0; n0 < N; n0 += chunk) {
      const int cnt = std::min(chunk, N - n0);
      const Eigen::Index P = cnt * HW;
      im2col(x.value(), n0, cnt, k, cols);
      Eigen::Map<RowMat<S>> rm(res, O, P);
      rm.noalias() = gain * (wm * Eigen::Map<const RowMat<S>>(cols, K, P));
      for (int n = 0; n < cnt; ++n)
        Eigen::Map<RowMat<S>>(out.sample(n0 + n), O, HW) = rm.middleCols(n * HW, HW);
    }
  }

  return make_result<S>(std::move(out), {x, w}, [=](Node<S>& self) {
    auto& px = *self.parents[0];
    auto& pw = *self.parents[1];
    Eigen::Map<const RowMat<S>> wmat(pw.value.data.data(), O, K);
    const Tensor<S>& g = self.grad;
    if (k == 1) {
      for (int n = 0; n < N; ++n) {
        Eigen::Map<const RowMat<S>> gn(g.sample(n), O, HW);
        if (pw.requires_grad)
          Eigen::Map<RowMat<S>>(pw.grad_data().data(), O, K).noalias() +=
              gain * (gn * Eigen::Map<const RowMat<S>>(px.value.sample(n), C, HW).transpose());
        if (px.requires_grad) {
          px.grad_data();
          Eigen::Map<RowMat<S>>(px.grad.sample(n), C, HW).noalias() +=
              gain * (wmat.transpose() * gn);
        }
      }
      return;
    }
    S* cols = workspace<S>(0, K * chunk * HW);
    S* gcat = workspace<S>(1, O * chunk * HW);
    if (px.requires_grad) px.grad_data();
    for (int n0 = 0; n0 < N; n0 += chunk) {
      const int cnt = std::min(chunk, N - n0);
      const Eigen::Index P = cnt * HW;
      Eigen::Map<RowMat<S>> gm(gcat, O, P);
      for (int n = 0; n < cnt; ++n)
        gm.middleCols(n * HW, HW) = Eigen::Map<const RowMat<S>>(g.sample(n0 + n), O, HW);
      Eigen::Map<RowMat<S>> cm(cols, K, P);
      if (pw.requires_grad) {
        im2col(px.value, n0, cnt, k, cols);
        Eigen::Map<RowMat<S>>(pw.grad_data().data(), O, K).noalias() += gain * (gm * cm.transpose());
      }
      if (px.requires_grad) {
        cm.noalias() = gain * (wmat.transpose() * gm);
        col2im(cols, n0, cnt, k, px.grad);
      }
    }
  });
}

const Eigen::Array<bool, Eigen::Dynamic, 1>& LeakyGates::next(Eigen::Index size) {
  require(next_ < gates_.size() && gates_[next_].size() == size, Errc::shape_mismatch,
          "leaky gate replay does not match the recorded pass");
  return gates_[next_++];
}

template <typename S>
Var<S> bias_act(const Var<S>& x, const Var<S>& b, S bias_gain, bool leaky, S act_gain,
                LeakyGates* gates) {
  const Shape xs = x.shape();
  require(b.shape() == Shape{1, xs[1], 1, 1}, Errc::shape_mismatch,
          "bias_act: bias " + to_string(b.shape()) + " for " + to_string(xs));
  const int N = xs[0], C = xs[1];
  const Eigen::Index HW = Eigen::Index(xs[2]) * xs[3];
  Tensor<S> z(xs);
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const Eigen::Index off = (Eigen::Index(n) * C + c) * HW;
      z.data.segment(off, HW) = x.value().data.segment(off, HW) + bias_gain * b.value().data[c];
    }
  using Gate = Eigen::Array<bool, Eigen::Dynamic, 1>;
  std::shared_ptr<const Gate> gate;
  if (leaky) {
    if (gates && gates->mode() == LeakyGates::Mode::replay) {
      gate = std::make_shared<const Gate>(gates->next(z.data.size()));
    } else {
      gate = std::make_shared<const Gate>(z.data > S(0));
      if (gates) gates->push(*gate);
    }
    z.data = gate->select(z.data, S(0.2) * z.data);
  }
  z.data *= act_gain;
  return make_result<S>(std::move(z), {x, b}, [=](Node<S>& self) {
    auto& px = *self.parents[0];
    auto& pb = *self.parents[1];
    Arr<S> dz = self.grad.data * act_gain;
    if (gate) dz = gate->select(dz, S(0.2) * dz);
    if (px.requires_grad) px.grad_data() += dz;
    if (pb.requires_grad) {
      Arr<S>& gb = pb.grad_data();
      for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c)
          gb[c] += bias_gain * dz.segment((Eigen::Index(n) * C + c) * HW, HW).sum();
    }
  });
}

template <typename S>
Var<S> demod_coeff(const Var<S>& w, const Var<S>& s, S gain, S eps) {
  const Shape ws = w.shape(), ss = s.shape();
  require(ss[1] == ws[1] && ss[2] == 1 && ss[3] == 1, Errc::shape_mismatch,
          "demod_coeff: w " + to_string(ws) + " s " + to_string(ss));
  const int N = ss[0], O = ws[0], C = ws[1];
  const Eigen::Index KK = Eigen::Index(ws[2]) * ws[3];
  // wsq[o, c] = sum_k w^2, d = (gain^2 wsq s^2 + eps)^-1/2.
  RowMat<S> wsq(O, C);
  for (int o = 0; o < O; ++o)
    for (int c = 0; c < C; ++c)
      wsq(o, c) = w.value().data.segment((Eigen::Index(o) * C + c) * KK, KK).square().sum();
  Eigen::Map<const ColMat<S>> sm(s.value().data.data(), C, N);
  const ColMat<S> s2 = sm.array().square().matrix();
  Tensor<S> out({N, O, 1, 1});
  Eigen::Map<ColMat<S>> dm(out.data.data(), O, N);
  dm.noalias() = gain * gain * (wsq * s2);
  dm = (dm.array() + eps).rsqrt().matrix();
  return make_result<S>(std::move(out), {w, s}, [=](Node<S>& self) {
    auto& pw = *self.parents[0];
    auto& ps = *self.parents[1];
    Eigen::Map<const ColMat<S>> d(self.value.data.data(), O, N);
    Eigen::Map<const ColMat<S>> g(self.grad.data.data(), O, N);
    // gq = dL/dq, q = gain^2 wsq s^2.
    const ColMat<S> gq = (S(-0.5) * g.array() * d.array().cube()).matrix();
    if (pw.requires_grad) {
      const RowMat<S> gwsq = gain * gain * (gq * s2.transpose());  // [O, C]
      Arr<S>& gw = pw.grad_data();
      for (int o = 0; o < O; ++o)
        for (int c = 0; c < C; ++c) {
          const Eigen::Index off = (Eigen::Index(o) * C + c) * KK;
          gw.segment(off, KK) += 2 * gwsq(o, c) * pw.value.data.segment(off, KK);
        }
    }
    if (ps.requires_grad) {
      Eigen::Map<const ColMat<S>> sv(ps.value.data.data(), C, N);
      const ColMat<S> gs2 = gain * gain * (wsq.transpose() * gq);  // [C, N]
      Eigen::Map<ColMat<S>>(ps.grad_data().data(), C, N).array() += 2 * gs2.array() * sv.array();
    }
  });
}

template <typename S>
Var<S> upsample2x(const Var<S>& x) {
  return resample(x, upsample_taps(x.shape()[2], false), upsample_taps(x.shape()[3], true));
}

template <typename S>
Var<S> downsample2x(const Var<S>& x) {
  require(x.shape()[2] % 2 == 0 && x.shape()[3] % 2 == 0, Errc::shape_mismatch,
          "downsample2x needs even extents, got " + to_string(x.shape()));
  return resample(x, downsample_taps(x.shape()[2]), downsample_taps(x.shape()[3]));
}

template <typename S>
Var<S> box_filter3(const Var<S>& x) {
  return resample(x, box_taps(x.shape()[2], false), box_taps(x.shape()[3], true));
}

template <typename S>
Var<S> roll(const Var<S>& x, int dy, int dx) {
  const Shape xs = x.shape();
  const int H = xs[2], W = xs[3];
  const Eigen::Index planes = Eigen::Index(xs[0]) * xs[1], HW = Eigen::Index(H) * W;
  auto shifted = [=](const S* in, S* out, int sy, int sx, bool accumulate) {
    for (Eigen::Index p = 0; p < planes; ++p)
      for (int y = 0; y < H; ++y) {
        const S* src = in + p * HW + Eigen::Index(wrap(y - sy, H)) * W;
        S* dst = out + p * HW + Eigen::Index(y) * W;
        for (int xx = 0; xx < W; ++xx) {
          const S v = src[wrap(xx - sx, W)];
          dst[xx] = accumulate ? dst[xx] + v : v;
        }
      }
  };
  Tensor<S> out(xs);
  shifted(x.value().data.data(), out.data.data(), dy, dx, false);
  return make_result<S>(std::move(out), {x}, [=](Node<S>& self) {
    shifted(self.grad.data.data(), self.parents[0]->grad_data().data(), -dy, -dx, true);
  });
}

template <typename S>
Var<S> normalize_2nd_moment(const Var<S>& x, S eps) {
  const Shape xs = x.shape();
  const int N = xs[0];
  const Eigen::Index D = numel(xs) / std::max(N, 1);
  Tensor<S> out(xs);
  Arr<S> r(N);
  for (int n = 0; n < N; ++n) {
    auto seg = x.value().data.segment(n * D, D);
    r[n] = S(1) / std::sqrt(seg.square().mean() + eps);
    out.data.segment(n * D, D) = seg * r[n];
  }
  return make_result<S>(std::move(out), {x}, [=](Node<S>& self) {
    auto& px = *self.parents[0];
    Arr<S>& gx = px.grad_data();
    for (int n = 0; n < N; ++n) {
      auto xv = px.value.data.segment(n * D, D);
      auto g = self.grad.data.segment(n * D, D);
      const S dot = (g * xv).sum();
      gx.segment(n * D, D) += r[n] * g - xv * (r[n] * r[n] * r[n] * dot / S(D));
    }
  });
}

template <typename S>
Var<S> channel_normalize(const Var<S>& x, S eps) {
  const Shape xs = x.shape();
  const int N = xs[0], C = xs[1];
  const Eigen::Index HW = Eigen::Index(xs[2]) * xs[3];
  Tensor<S> out(xs);
  Arr<S> r(Eigen::Index(N) * HW);
  for (int n = 0; n < N; ++n) {
    Eigen::Map<const RowMat<S>> xm(x.value().sample(n), C, HW);
    auto rn = r.segment(n * HW, HW);
    rn = (xm.colwise().squaredNorm().array().transpose() + eps).rsqrt();
    Eigen::Map<RowMat<S>>(out.sample(n), C, HW) = xm * rn.matrix().asDiagonal();
  }
  return make_result<S>(std::move(out), {x}, [=](Node<S>& self) {
    auto& px = *self.parents[0];
    px.grad_data();
    for (int n = 0; n < N; ++n) {
      Eigen::Map<const RowMat<S>> xm(px.value.sample(n), C, HW);
      Eigen::Map<const RowMat<S>> g(self.grad.sample(n), C, HW);
      const auto rn = r.segment(n * HW, HW);
      const Arr<S> dot = (g.array() * xm.array()).colwise().sum().transpose();
      Eigen::Map<RowMat<S>> gx(px.grad.sample(n), C, HW);
      gx += g * rn.matrix().asDiagonal();
      gx -= xm * (rn.cube() * dot).matrix().asDiagonal();
    }
  });
}

#define PANOLIGHT_INSTANTIATE(S)                                                   \
  template Var<S> add(const Var<S>&, const Var<S>&);                               \
  template Var<S> sub(const Var<S>&, const Var<S>&);                               \
  template Var<S> mul(const Var<S>&, const Var<S>&);                               \
  template Var<S> scale(const Var<S>&, S);                                         \
  template Var<S> shift(const Var<S>&, S);                                         \
  template Var<S> square(const Var<S>&);                                           \
  template Var<S> sqrt_eps(const Var<S>&, S);                                      \
  template Var<S> pow_pos(const Var<S>&, S);                                       \
  template Var<S> log1p(const Var<S>&);                                            \
  template Var<S> clamp(const Var<S>&, S, S);                                      \
  template Var<S> relu(const Var<S>&);                                             \
  template Var<S> softplus(const Var<S>&);                                         \
  template Var<S> sum(const Var<S>&);                                              \
  template Var<S> mean(const Var<S>&);                                             \
  template Var<S> reshape(const Var<S>&, const Shape&);                            \
  template Var<S> linear(const Var<S>&, const Var<S>&, S);                         \
  template Var<S> conv2d(const Var<S>&, const Var<S>&, S);                         \
  template Var<S> bias_act(const Var<S>&, const Var<S>&, S, bool, S, LeakyGates*); \
  template Var<S> demod_coeff(const Var<S>&, const Var<S>&, S, S);                 \
  template Var<S> upsample2x(const Var<S>&);                                       \
  template Var<S> downsample2x(const Var<S>&);                                     \
  template Var<S> box_filter3(const Var<S>&);                                      \
  template Var<S> roll(const Var<S>&, int, int);                                   \
  template Var<S> normalize_2nd_moment(const Var<S>&, S);                          \
  template Var<S> channel_normalize(const Var<S>&, S);

PANOLIGHT_INSTANTIATE(float)
PANOLIGHT_INSTANTIATE(double)

}  // namespace panolight::nn
