#include "panolight/gan/networks.hpp"

#include <cmath>
#include <optional>

namespace panolight::gan {

using nn::Shape;
using nn::Tensor;
using nn::Var;

template <typename S>
Var<S> ParamSet<S>::add(const std::string& name, Tensor<S> init) {
  Var<S> v = nn::parameter(std::move(init));
  items_.emplace_back(name, v);
  return v;
}

template <typename S>
std::vector<Var<S>> ParamSet<S>::vars(const std::string& prefix) const {
  std::vector<Var<S>> out;
  for (const auto& [name, v] : items_)
    if (name.rfind(prefix, 0) == 0) out.push_back(v);
  return out;
}

template <typename S>
void ParamSet<S>::set_requires_grad(bool on) {
  for (auto& item : items_) item.second.set_requires_grad(on);
}

template <typename S>
void ParamSet<S>::zero_grad() {
  for (auto& item : items_) item.second.zero_grad();
}

template <typename S>
void ParamSet<S>::copy_from(const ParamSet& other) {
  require(other.items_.size() == items_.size(), Errc::shape_mismatch, "parameter sets differ");
  for (std::size_t i = 0; i < items_.size(); ++i) {
    require(items_[i].first == other.items_[i].first &&
                items_[i].second.shape() == other.items_[i].second.shape(),
            Errc::shape_mismatch, "parameter mismatch at " + items_[i].first);
    items_[i].second.mutable_value().data = other.items_[i].second.value().data;
  }
}

template <typename S>
void ParamSet<S>::ema_toward(const ParamSet& other, S beta) {
  for (std::size_t i = 0; i < items_.size(); ++i) {
    auto& mine = items_[i].second.mutable_value().data;
    const auto& src = other.items_[i].second.value().data;
    mine = src + beta * (mine - src);
  }
}

namespace {

template <typename S>
Tensor<S> randn(const Shape& s, Rng& rng, S scale = S(1)) {
  Tensor<S> t = Tensor<S>::randn(s, rng);
  t.data *= scale;
  return t;
}

template <typename S>
Var<S> conv_layer(const Var<S>& x, const Var<S>& w, const Var<S>& b, bool act,
                  nn::LeakyGates* gates = nullptr) {
  const Shape ws = w.shape();
  const S gain = S(1) / std::sqrt(S(ws[1]) * ws[2] * ws[3]);
  return nn::bias_act(nn::conv2d(x, w, gain), b, S(1), act, act ? std::sqrt(S(2)) : S(1), gates);
}

template <typename S>
Var<S> fc_layer(const Var<S>& x, const Var<S>& w, const Var<S>& b, bool act, S lr_mult = S(1),
                nn::LeakyGates* gates = nullptr) {
  const S gain = lr_mult / std::sqrt(S(w.shape()[1]));
  return nn::bias_act(nn::linear(x, w, gain), b, lr_mult, act, act ? std::sqrt(S(2)) : S(1),
                      gates);
}

}  // namespace

template <typename S>
Generator<S>::Generator(const GeneratorConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  Rng rng(derive_seed(seed, 0x6e));
  const int D = config_.latent_dim;
  const S lr_mult = S(config_.mapping_lr_mult);
  for (int i = 0; i < config_.mapping_layers; ++i) {
    const std::string p = "mapping.fc" + std::to_string(i);
    auto w = params_.add(p + ".weight", randn<S>({D, D, 1, 1}, rng, S(1) / lr_mult));
    auto b = params_.add(p + ".bias", Tensor<S>({1, D, 1, 1}));
    mapping_.emplace_back(w, b);
  }

  const int c0 = config_.channels(0);
  const_input_ = params_.add("synthesis.const", randn<S>({1, c0, 4, 8}, rng));
  for (int level = 0; level < config_.levels(); ++level) {
    const int res = config_.level_height(level);
    const std::string base = "synthesis.b" + std::to_string(res) + ".";
    const int cout = config_.channels(level);
    const int cin0 = level == 0 ? c0 : config_.channels(level - 1);
    for (int k = level == 0 ? 1 : 0; k < 2; ++k) {
      const int cin = k == 0 ? cin0 : cout;
      const std::string p = base + "conv" + std::to_string(k) + ".";
      StyledConv c;
      c.cin = cin;
      c.up = level > 0 && k == 0;
      c.affine_w = params_.add(p + "affine.weight", randn<S>({cin, D, 1, 1}, rng));
      c.affine_b = params_.add(p + "affine.bias", Tensor<S>({1, cin, 1, 1}, S(1)));
      c.weight = params_.add(p + "weight", randn<S>({cout, cin, 3, 3}, rng));
      c.noise_strength = params_.add(p + "noise_strength", Tensor<S>({1, 1, 1, 1}));
      c.bias = params_.add(p + "bias", Tensor<S>({1, cout, 1, 1}));
      convs_.push_back(c);
    }
    ToRgb t;
    t.cin = cout;
    t.affine_w = params_.add(base + "torgb.affine.weight", randn<S>({cout, D, 1, 1}, rng));
    t.affine_b = params_.add(base + "torgb.affine.bias", Tensor<S>({1, cout, 1, 1}, S(1)));
    t.weight = params_.add(base + "torgb.weight", randn<S>({3, cout, 1, 1}, rng));
    t.bias = params_.add(base + "torgb.bias", Tensor<S>({1, 3, 1, 1}));
    torgb_.push_back(t);
  }
  w_avg = Tensor<S>({1, D, 1, 1});
}

template <typename S>
Generator<S> Generator<S>::clone() const {
  Generator out(config_, 0);
  out.params_.copy_from(params_);
  out.w_avg = w_avg;
  return out;
}

template <typename S>
Var<S> Generator<S>::mapping(const Var<S>& z) const {
  require(z.shape()[1] == config_.latent_dim && z.shape()[2] == 1 && z.shape()[3] == 1,
          Errc::shape_mismatch, "mapping: z must be [N, latent, 1, 1], got " + nn::to_string(z.shape()));
  Var<S> x = nn::normalize_2nd_moment(z);
  for (const auto& [w, b] : mapping_) x = fc_layer(x, w, b, true, S(config_.mapping_lr_mult));
  return x;
}

template <typename S>
Var<S> Generator<S>::styled_conv(const StyledConv& layer, Var<S> x, const Var<S>& w,
                                 const Var<S>* noise, nn::LeakyGates* gates) const {
  const S gain = S(1) / std::sqrt(S(layer.cin) * 9);
  const Var<S> style = fc_layer(w, layer.affine_w, layer.affine_b, false);
  if (layer.up) x = nn::upsample2x(x);
  x = nn::conv2d(nn::mul(x, style), layer.weight, gain);
  x = nn::mul(x, nn::demod_coeff(layer.weight, style, gain, S(1e-8)));
  if (noise) x = nn::add(x, nn::mul(*noise, layer.noise_strength));
  return nn::bias_act(x, layer.bias, S(1), true, std::sqrt(S(2)), gates);
}

template <typename S>
Var<S> Generator<S>::to_rgb(const ToRgb& layer, const Var<S>& x, const Var<S>& w) const {
  const S gain = S(1) / std::sqrt(S(layer.cin));
  const Var<S> style = fc_layer(w, layer.affine_w, layer.affine_b, false);
  return nn::bias_act(nn::conv2d(nn::mul(x, style), layer.weight, gain), layer.bias, S(1), false,
                      S(1));
}

template <typename S>
Shape Generator<S>::noise_shape(int layer) const {
  const int level = (layer + 1) / 2;
  const int h = config_.level_height(level);
  return {1, 1, h, 2 * h};
}

template <typename S>
NoiseMaps<S> Generator<S>::random_noise(Rng& rng) const {
  NoiseMaps<S> maps;
  for (int i = 0; i < config_.num_conv_layers(); ++i)
    maps.push_back(nn::constant(Tensor<S>::randn(noise_shape(i), rng)));
  return maps;
}

template <typename S>
Var<S> Generator<S>::synthesize(const std::vector<Var<S>>& ws, const NoiseSource<S>& noise,
                                nn::LeakyGates* gates) const {
  require(int(ws.size()) == config_.num_ws(), Errc::shape_mismatch,
          "synthesize: expected " + std::to_string(config_.num_ws()) + " style vectors");
  const int N = ws[0].shape()[0];
  for (const auto& w : ws)
    require(w.shape() == Shape{N, config_.latent_dim, 1, 1}, Errc::shape_mismatch,
            "synthesize: style vector shape " + nn::to_string(w.shape()));
  if (noise.maps) {
    require(int(noise.maps->size()) == config_.num_conv_layers(), Errc::shape_mismatch,
            "synthesize: wrong number of noise maps");
    for (int i = 0; i < config_.num_conv_layers(); ++i)
      require((*noise.maps)[std::size_t(i)].shape() == noise_shape(i), Errc::shape_mismatch,
              "synthesize: noise map " + std::to_string(i) + " has shape " +
                  nn::to_string((*noise.maps)[std::size_t(i)].shape()));
  }

  auto noise_for = [&](int layer) -> std::optional<Var<S>> {
    if (noise.maps) return (*noise.maps)[std::size_t(layer)];
    if (noise.rng) {
      Shape s = noise_shape(layer);
      s[0] = N;
      return nn::constant(Tensor<S>::randn(s, *noise.rng));
    }
    return std::nullopt;
  };

  Var<S> x = nn::add(const_input_, nn::constant(Tensor<S>({N, 1, 1, 1})));
  Var<S> img;
  int layer = 0;
  for (int level = 0; level < config_.levels(); ++level) {
    const int nconv = level == 0 ? 1 : 2;
    for (int k = 0; k < nconv; ++k, ++layer) {
      const auto n = noise_for(layer);
      x = styled_conv(convs_[std::size_t(layer)], x, ws[std::size_t(layer)], n ? &*n : nullptr,
                      gates);
    }
    const Var<S> rgb = to_rgb(torgb_[std::size_t(level)], x, ws[std::size_t(layer)]);
    img = level == 0 ? rgb : nn::add(nn::upsample2x(img), rgb);
  }
  return img;
}

template <typename S>
Var<S> Generator<S>::synthesize(const Var<S>& w, const NoiseSource<S>& noise,
                                nn::LeakyGates* gates) const {
  return synthesize(std::vector<Var<S>>(std::size_t(config_.num_ws()), w), noise, gates);
}

template <typename S>
void Generator<S>::estimate_w_avg(int samples, std::uint64_t seed) {
  nn::NoGradGuard guard;
  Rng rng(seed);
  const int D = config_.latent_dim;
  Tensor<S> acc({1, D, 1, 1});
  constexpr int kChunk = 250;
  for (int done = 0; done < samples; done += kChunk) {
    const int n = std::min(kChunk, samples - done);
    const Var<S> w = mapping(nn::constant(Tensor<S>::randn({n, D, 1, 1}, rng)));
    for (int i = 0; i < n; ++i) acc.data += w.value().data.segment(Eigen::Index(i) * D, D);
  }
  w_avg = acc;
  w_avg.data /= S(std::max(samples, 1));
}

template <typename S>
Discriminator<S>::Discriminator(const GeneratorConfig& config, std::uint64_t seed)
    : config_(config) {
  config_.validate();
  Rng rng(derive_seed(seed, 0xd1));
  const int top = config_.levels() - 1;
  const int ctop = config_.channels(top);
  from_rgb_w_ = params_.add("from_rgb.weight", randn<S>({ctop, 3, 1, 1}, rng));
  from_rgb_b_ = params_.add("from_rgb.bias", Tensor<S>({1, ctop, 1, 1}));
  for (int level = top; level >= 1; --level) {
    const std::string p = "b" + std::to_string(config_.level_height(level)) + ".";
    Block b;
    b.cin = config_.channels(level);
    b.cout = config_.channels(level - 1);
    b.conv0_w = params_.add(p + "conv0.weight", randn<S>({b.cin, b.cin, 3, 3}, rng));
    b.conv0_b = params_.add(p + "conv0.bias", Tensor<S>({1, b.cin, 1, 1}));
    b.conv1_w = params_.add(p + "conv1.weight", randn<S>({b.cout, b.cin, 3, 3}, rng));
    b.conv1_b = params_.add(p + "conv1.bias", Tensor<S>({1, b.cout, 1, 1}));
    b.skip_w = params_.add(p + "skip.weight", randn<S>({b.cout, b.cin, 1, 1}, rng));
    blocks_.push_back(b);
  }
  const int c0 = config_.channels(0);
  epi_conv_w_ = params_.add("b4.conv.weight", randn<S>({c0, c0, 3, 3}, rng));
  epi_conv_b_ = params_.add("b4.conv.bias", Tensor<S>({1, c0, 1, 1}));
  fc_w_ = params_.add("b4.fc.weight", randn<S>({c0, c0 * 32, 1, 1}, rng));
  fc_b_ = params_.add("b4.fc.bias", Tensor<S>({1, c0, 1, 1}));
  out_w_ = params_.add("b4.out.weight", randn<S>({1, c0, 1, 1}, rng));
  out_b_ = params_.add("b4.out.bias", Tensor<S>({1, 1, 1, 1}));
}

template <typename S>
Discriminator<S> Discriminator<S>::clone() const {
  Discriminator out(config_, 0);
  out.params_.copy_from(params_);
  return out;
}

template <typename S>
Var<S> Discriminator<S>::operator()(const Var<S>& img, nn::LeakyGates* gates) const {
  const Shape s = img.shape();
  require(s[1] == 3 && s[2] == config_.height && s[3] == config_.width, Errc::shape_mismatch,
          "discriminator input " + nn::to_string(s) + " does not match the configured resolution");
  const S inv_sqrt2 = S(1) / std::sqrt(S(2));
  Var<S> x = conv_layer(img, from_rgb_w_, from_rgb_b_, true, gates);
  for (const Block& b : blocks_) {
    const Var<S> skip = nn::conv2d(nn::downsample2x(x), b.skip_w, S(1) / std::sqrt(S(b.cin)));
    Var<S> t = conv_layer(x, b.conv0_w, b.conv0_b, true, gates);
    t = conv_layer(nn::downsample2x(t), b.conv1_w, b.conv1_b, true, gates);
    x = nn::scale(nn::add(t, skip), inv_sqrt2);
  }
  x = conv_layer(x, epi_conv_w_, epi_conv_b_, true, gates);
  x = nn::reshape(x, {s[0], x.shape()[1] * 32, 1, 1});
  x = fc_layer(x, fc_w_, fc_b_, true, S(1), gates);
  return fc_layer(x, out_w_, out_b_, false);
}

template class ParamSet<float>;
template class ParamSet<double>;
template class Generator<float>;
template class Generator<double>;
template class Discriminator<float>;
template class Discriminator<double>;

}  // namespace panolight::gan
