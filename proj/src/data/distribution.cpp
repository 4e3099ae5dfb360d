#include "panolight/data/distribution.hpp"

#include <cmath>
#include <numeric>

#include "panolight/data/rgbe.hpp"

namespace panolight::data {

const char* to_string(FitStatus s) {
  switch (s) {
    case FitStatus::pass: return "pass";
    case FitStatus::fail: return "fail";
    case FitStatus::degenerate: return "degenerate";
    case FitStatus::empty: return "empty";
  }
  return "unknown";
}

GaussianFit fit_gaussian(std::span<const double> x) {
  GaussianFit fit;
  fit.n = x.size();
  if (x.empty()) {
    fit.degenerate = true;
    return fit;
  }
  const double n = double(x.size());
  fit.mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
  double m2 = 0, m3 = 0, m4 = 0;
  for (double v : x) {
    const double d = v - fit.mean;
    const double d2 = d * d;
    m2 += d2;
    m3 += d2 * d;
    m4 += d2 * d2;
  }
  m2 /= n;
  m3 /= n;
  m4 /= n;
  fit.stddev = std::sqrt(m2);
  if (x.size() < 8 || m2 <= 1e-12 * std::max(1.0, fit.mean * fit.mean)) {
    fit.degenerate = true;
    return fit;
  }

  // Skewness test (D'Agostino 1970).
  const double g1 = m3 / std::pow(m2, 1.5);
  const double y = g1 * std::sqrt((n + 1) * (n + 3) / (6.0 * (n - 2)));
  const double beta2 = 3.0 * (n * n + 27 * n - 70) * (n + 1) * (n + 3) /
                       ((n - 2) * (n + 5) * (n + 7) * (n + 9));
  const double w2 = -1 + std::sqrt(2 * (beta2 - 1));
  const double delta = 1 / std::sqrt(0.5 * std::log(w2));
  const double a = std::sqrt(2.0 / (w2 - 1));
  const double ya = y / a;
  const double z_skew = delta * std::log(ya + std::sqrt(ya * ya + 1));

  // Kurtosis test (Anscombe & Glynn 1983).
  const double b2 = m4 / (m2 * m2);
  const double e = 3.0 * (n - 1) / (n + 1);
  const double var_b2 = 24.0 * n * (n - 2) * (n - 3) / ((n + 1) * (n + 1) * (n + 3) * (n + 5));
  const double xk = (b2 - e) / std::sqrt(var_b2);
  const double sqrt_beta1 = 6.0 * (n * n - 5 * n + 2) / ((n + 7) * (n + 9)) *
                            std::sqrt(6.0 * (n + 3) * (n + 5) / (n * (n - 2) * (n - 3)));
  const double big_a =
      6.0 + 8.0 / sqrt_beta1 * (2.0 / sqrt_beta1 + std::sqrt(1 + 4.0 / (sqrt_beta1 * sqrt_beta1)));
  const double term1 = 1 - 2 / (9 * big_a);
  const double denom = 1 + xk * std::sqrt(2 / (big_a - 4));
  const double term2 = std::copysign(std::cbrt((1 - 2 / big_a) / std::abs(denom)), denom);
  const double z_kurt = (term1 - term2) / std::sqrt(2 / (9 * big_a));

  fit.k2 = z_skew * z_skew + z_kurt * z_kurt;
  fit.p_value = std::exp(-0.5 * fit.k2);  // chi-square, 2 dof
  return fit;
}

namespace {

std::vector<double> strided(const std::vector<double>& v, std::size_t max_samples) {
  if (max_samples == 0 || v.size() <= max_samples) return v;
  std::vector<double> out;
  out.reserve(max_samples);
  for (std::size_t k = 0; k < max_samples; ++k) out.push_back(v[k * v.size() / max_samples]);
  return out;
}

FitStatus classify(const std::vector<double>& samples, const DistributionOptions& opt,
                   GaussianFit& fit) {
  if (samples.empty()) return FitStatus::empty;
  const auto sub = strided(samples, opt.max_samples);
  fit = fit_gaussian(sub);
  if (fit.degenerate) return FitStatus::degenerate;
  return fit.p_value >= opt.significance ? FitStatus::pass : FitStatus::fail;
}

}  // namespace

ImageDistribution analyze_image(const pano::HdrPanorama& pano, const DistributionOptions& opt) {
  const ImageF& img = pano.pixels();
  const Eigen::Index n = img.pixel_count();
  std::vector<double> ldr, hdr_minus;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double lum = (double(img.data()[i]) + img.data()[i + n] + img.data()[i + 2 * n]) / 3.0;
    (lum > opt.threshold ? hdr_minus : ldr).push_back(lum);
  }
  ImageDistribution d;
  d.max_intensity = pano.max_value();
  d.hdr_minus_pixel_fraction = n > 0 ? double(hdr_minus.size()) / double(n) : 0.0;
  d.ldr = classify(ldr, opt, d.ldr_fit);
  d.hdr_minus = classify(hdr_minus, opt, d.hdr_minus_fit);
  return d;
}

DistributionReport analyze_distributions(std::span<const pano::HdrPanorama> panos,
                                         const DistributionOptions& opt) {
  require(!panos.empty(), Errc::invalid_argument, "analyze_distributions: no images");
  DistributionReport report;
  std::size_t ldr_pass = 0, hdr_pass = 0;
  for (const auto& p : panos) {
    auto d = analyze_image(p, opt);
    if (d.ldr == FitStatus::pass || d.ldr == FitStatus::fail) {
      ++report.ldr_counted;
      ldr_pass += d.ldr == FitStatus::pass;
    }
    if (d.hdr_minus == FitStatus::pass || d.hdr_minus == FitStatus::fail) {
      ++report.hdr_minus_counted;
      hdr_pass += d.hdr_minus == FitStatus::pass;
    }
    report.images.push_back(std::move(d));
  }
  if (report.ldr_counted) report.ldr_pass_fraction = double(ldr_pass) / double(report.ldr_counted);
  if (report.hdr_minus_counted)
    report.hdr_minus_pass_fraction = double(hdr_pass) / double(report.hdr_minus_counted);
  return report;
}

DistributionReport analyze_distributions(const DatasetManifest& manifest,
                                         const std::filesystem::path& manifest_dir,
                                         const DistributionOptions& opt) {
  std::vector<pano::HdrPanorama> panos = load_split(manifest, manifest_dir, Split::train);
  auto test = load_split(manifest, manifest_dir, Split::test);
  panos.insert(panos.end(), std::make_move_iterator(test.begin()),
               std::make_move_iterator(test.end()));
  return analyze_distributions(panos, opt);
}

}  // namespace panolight::data
