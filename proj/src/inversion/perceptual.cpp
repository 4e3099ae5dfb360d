#include "panolight/inversion/perceptual.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

#include "panolight/core/archive.hpp"
#include "panolight/gan/checkpoint.hpp"

namespace panolight::inversion {

using nn::Var;

namespace {

Var<float> mean_sq_diff(const Var<float>& a, const Var<float>& b) {
  return nn::mean(nn::square(nn::sub(a, b)));
}

void require_same_shape(const Var<float>& a, const Var<float>& b) {
  require(a.shape() == b.shape(), Errc::shape_mismatch,
          "perceptual distance: " + nn::to_string(a.shape()) + " vs " + nn::to_string(b.shape()));
}

}  // namespace

double PerceptualDistance::distance(const ImageF& a, const ImageF& b) const {
  require(a.same_shape(b), Errc::shape_mismatch, "perceptual distance: image shapes differ");
  nn::NoGradGuard guard;
  return (*this)(nn::constant(nn::from_image(a)), nn::constant(nn::from_image(b))).item();
}

Var<float> PatchStatsDistance::operator()(const Var<float>& a0, const Var<float>& b0) const {
  require_same_shape(a0, b0);
  constexpr float kEps = 1e-4f;
  Var<float> a = a0, b = b0, total;
  int scales = 0;
  for (;;) {
    const Var<float> mu_a = nn::box_filter3(a), mu_b = nn::box_filter3(b);
    const Var<float> sd_a =
        nn::sqrt_eps(nn::sub(nn::box_filter3(nn::square(a)), nn::square(mu_a)), kEps);
    const Var<float> sd_b =
        nn::sqrt_eps(nn::sub(nn::box_filter3(nn::square(b)), nn::square(mu_b)), kEps);
    const Var<float> term =
        nn::add(nn::add(mean_sq_diff(a, b), mean_sq_diff(mu_a, mu_b)), mean_sq_diff(sd_a, sd_b));
    total = scales == 0 ? term : nn::add(total, term);
    ++scales;
    const auto s = a.shape();
    if (s[2] < 8 || s[2] % 2 || s[3] % 2) break;
    a = nn::downsample2x(a);
    b = nn::downsample2x(b);
  }
  return nn::scale(total, 1.0f / float(scales));
}

FeatureDistance FeatureDistance::load(const std::filesystem::path& path) {
  const TensorArchive archive = TensorArchive::load(path);
  if (archive.metadata().value("format", "") != "panolight-perceptual")
    fail(Errc::archive_format, path.string() + " is not a perceptual weight archive");
  std::vector<int> pool_after;
  if (archive.metadata().contains("pool_after"))
    pool_after = archive.metadata()["pool_after"].get<std::vector<int>>();
  FeatureDistance d;
  d.source_ = path.filename().string();
  int cin = 3;
  for (int i = 0; archive.contains("conv" + std::to_string(i) + ".weight"); ++i) {
    const std::string p = "conv" + std::to_string(i);
    Layer l;
    l.weight = nn::constant(gan::get_tensor(archive, p + ".weight"));
    l.bias = nn::constant(gan::get_tensor(archive, p + ".bias"));
    l.lin = nn::constant(gan::get_tensor(archive, "lin" + std::to_string(i)));
    const nn::Shape ws = l.weight.shape();
    if (ws[1] != cin || ws[2] != 3 || ws[3] != 3 || l.bias.shape() != nn::Shape{1, ws[0], 1, 1} ||
        l.lin.shape() != nn::Shape{1, ws[0], 1, 1})
      fail(Errc::archive_format, "perceptual layer " + std::to_string(i) + " has inconsistent shapes");
    if ((l.lin.value().data < 0).any())
      fail(Errc::archive_format, "perceptual layer weights must be nonnegative");
    l.pool = std::find(pool_after.begin(), pool_after.end(), i) != pool_after.end();
    cin = ws[0];
    d.layers_.push_back(std::move(l));
  }
  if (d.layers_.empty()) fail(Errc::archive_format, "perceptual archive has no layers");
  return d;
}

Var<float> FeatureDistance::operator()(const Var<float>& a0, const Var<float>& b0) const {
  require_same_shape(a0, b0);
  Var<float> a = nn::shift(nn::scale(a0, 2.0f), -1.0f);
  Var<float> b = nn::shift(nn::scale(b0, 2.0f), -1.0f);
  Var<float> total;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const Layer& l = layers_[i];
    const float gain = 1.0f / std::sqrt(float(l.weight.shape()[1]) * 9.0f);
    const float act = std::sqrt(2.0f);
    a = nn::bias_act(nn::conv2d(a, l.weight, gain), l.bias, 1.0f, true, act);
    b = nn::bias_act(nn::conv2d(b, l.weight, gain), l.bias, 1.0f, true, act);
    const Var<float> diff = nn::sub(nn::channel_normalize(a), nn::channel_normalize(b));
    const Var<float> term =
        nn::scale(nn::mean(nn::mul(nn::square(diff), l.lin)), float(l.weight.shape()[0]));
    total = i == 0 ? term : nn::add(total, term);
    if (l.pool && a.shape()[2] % 2 == 0 && a.shape()[3] % 2 == 0) {
      a = nn::downsample2x(a);
      b = nn::downsample2x(b);
    }
  }
  return total;
}

std::shared_ptr<const PerceptualDistance> default_perceptual() {
  if (const char* cache = std::getenv("STYLELIGHT_CACHE"); cache && *cache) {
    const std::filesystem::path p = std::filesystem::path(cache) / kPerceptualWeightsFile;
    if (std::filesystem::exists(p)) return std::make_shared<FeatureDistance>(FeatureDistance::load(p));
  }
  return std::make_shared<PatchStatsDistance>();
}

}  // namespace panolight::inversion
