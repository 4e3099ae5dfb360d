#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "panolight/eval/render.hpp"

namespace panolight::eval {

/// Root mean squared error over foreground pixels and channels.
double rmse(const ImageD& pred, const ImageD& gt, const Mask& foreground);

/// rmse(s * pred, gt) with the least-squares scale s = <pred, gt> / <pred, pred>;
/// plain rmse when pred is zero on the foreground.
double si_rmse(const ImageD& pred, const ImageD& gt, const Mask& foreground);

/// Mean angle in degrees between RGB vectors, skipping pixels where either
/// vector has norm < 1e-8. Throws all_pixels_skipped if none remain.
double angular_error_deg(const ImageD& pred, const ImageD& gt, const Mask& foreground);

struct MaterialMetrics {
  double rmse = 0;
  double si_rmse = 0;
  double angular_error_deg = 0;
};

struct ImageMetrics {
  std::string name;
  std::map<Material, MaterialMetrics> per_material;
};

struct MetricsReport {
  std::vector<ImageMetrics> images;
  std::map<Material, MaterialMetrics> mean;
  SphereRenderSpec render;  // material field unused
};

struct EvalOptions {
  SphereRenderSpec render;
  std::vector<std::string> names;  // optional, one per pair
};

/// Renders all three materials per pair and averages each metric per material.
MetricsReport evaluate(std::span<const pano::HdrPanorama> pred,
                       std::span<const pano::HdrPanorama> gt, const EvalOptions& options = {});

nlohmann::json to_json(const MetricsReport& report);

}  // namespace panolight::eval
