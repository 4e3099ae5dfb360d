#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "panolight/data/dataset.hpp"
#include "panolight/pano/panorama.hpp"

namespace panolight::data {

/// Maximum-likelihood Gaussian fit plus the D'Agostino-Pearson K^2 omnibus test.
struct GaussianFit {
  std::size_t n = 0;
  double mean = 0;
  double stddev = 0;
  double k2 = 0;
  double p_value = 0;
  bool degenerate = false;  // zero variance or too few samples
};

GaussianFit fit_gaussian(std::span<const double> samples);

enum class FitStatus { pass, fail, degenerate, empty };
const char* to_string(FitStatus s);

struct ImageDistribution {
  FitStatus ldr = FitStatus::empty;
  FitStatus hdr_minus = FitStatus::empty;  // "no-HDR-" when empty
  double hdr_minus_pixel_fraction = 0;
  double max_intensity = 0;
  GaussianFit ldr_fit;
  GaussianFit hdr_minus_fit;

  bool ldr_gauss_fit_ok() const { return ldr == FitStatus::pass; }
  bool hdrminus_gauss_fit_ok() const { return hdr_minus == FitStatus::pass; }
};

struct DistributionReport {
  std::vector<ImageDistribution> images;
  /// Pass fractions over images whose partition is non-empty and non-degenerate.
  double ldr_pass_fraction = 0;
  double hdr_minus_pass_fraction = 0;
  std::size_t ldr_counted = 0;
  std::size_t hdr_minus_counted = 0;
};

struct DistributionOptions {
  double threshold = 1.0;       // LDR: luminance <= threshold, HDR-: above
  double significance = 0.05;
  std::size_t max_samples = 256;  // deterministic strided subsample per partition
};

ImageDistribution analyze_image(const pano::HdrPanorama& pano, const DistributionOptions& opt = {});
DistributionReport analyze_distributions(std::span<const pano::HdrPanorama> panos,
                                         const DistributionOptions& opt = {});
DistributionReport analyze_distributions(const DatasetManifest& manifest,
                                         const std::filesystem::path& manifest_dir,
                                         const DistributionOptions& opt = {});

}  // namespace panolight::data
