#include "panolight/eval/metrics.hpp"

#include <cmath>
#include <algorithm>
#include <numbers>

#include <Eigen/Geometry>

namespace panolight::eval {
namespace {

void check_inputs(const ImageD& pred, const ImageD& gt, const Mask& fg) {
  require(pred.same_shape(gt), Errc::shape_mismatch, "metric inputs differ in shape");
  require(fg.rows() == pred.height() && fg.cols() == pred.width(), Errc::shape_mismatch,
          "foreground mask does not match the images");
  require(fg.any(), Errc::empty_foreground, "empty foreground");
}

double scaled_rmse(const ImageD& pred, const ImageD& gt, const Mask& fg, double s) {
  double acc = 0;
  Eigen::Index count = 0;
  for (int c = 0; c < pred.channels(); ++c)
    for (int i = 0; i < pred.height(); ++i)
      for (int j = 0; j < pred.width(); ++j)
        if (fg(i, j)) {
          const double d = s * pred(c, i, j) - gt(c, i, j);
          acc += d * d;
          ++count;
        }
  return std::sqrt(acc / double(count));
}

}  // namespace

double rmse(const ImageD& pred, const ImageD& gt, const Mask& fg) {
  check_inputs(pred, gt, fg);
  return scaled_rmse(pred, gt, fg, 1.0);
}

double si_rmse(const ImageD& pred, const ImageD& gt, const Mask& fg) {
  check_inputs(pred, gt, fg);
  double pg = 0, pp = 0;
  for (int c = 0; c < pred.channels(); ++c)
    for (int i = 0; i < pred.height(); ++i)
      for (int j = 0; j < pred.width(); ++j)
        if (fg(i, j)) {
          pg += pred(c, i, j) * gt(c, i, j);
          pp += pred(c, i, j) * pred(c, i, j);
        }
  return scaled_rmse(pred, gt, fg, pp > 0 ? pg / pp : 1.0);
}

double angular_error_deg(const ImageD& pred, const ImageD& gt, const Mask& fg) {
  check_inputs(pred, gt, fg);
  require(pred.channels() == 3, Errc::shape_mismatch, "angular error needs RGB images");
  double acc = 0;
  Eigen::Index count = 0;
  for (int i = 0; i < pred.height(); ++i)
    for (int j = 0; j < pred.width(); ++j) {
      if (!fg(i, j)) continue;
      const Eigen::Vector3d p(pred(0, i, j), pred(1, i, j), pred(2, i, j));
      const Eigen::Vector3d g(gt(0, i, j), gt(1, i, j), gt(2, i, j));
      const double np = p.norm(), ng = g.norm();
      if (np < 1e-8 || ng < 1e-8) continue;
      acc += std::atan2(p.cross(g).norm(), p.dot(g));
      ++count;
    }
  require(count > 0, Errc::all_pixels_skipped, "angular error: every foreground pixel is black");
  return acc / double(count) * 180.0 / std::numbers::pi;
}

MetricsReport evaluate(std::span<const pano::HdrPanorama> pred,
                       std::span<const pano::HdrPanorama> gt, const EvalOptions& options) {
  require(pred.size() == gt.size(), Errc::length_mismatch,
          "evaluate: " + std::to_string(pred.size()) + " predictions vs " +
              std::to_string(gt.size()) + " ground truths");
  require(options.names.empty() || options.names.size() == pred.size(), Errc::length_mismatch,
          "evaluate: names do not match the pairs");
  MetricsReport report;
  report.render = options.render;
  for (Material m : kAllMaterials) report.mean[m] = {};
  for (std::size_t k = 0; k < pred.size(); ++k) {
    ImageMetrics row;
    row.name = options.names.empty() ? std::to_string(k) : options.names[k];
    for (Material m : kAllMaterials) {
      SphereRenderSpec spec = options.render;
      spec.material = m;
      const SphereImage p = render_sphere(pred[k], spec);
      const SphereImage g = render_sphere(gt[k], spec);
      MaterialMetrics mm{rmse(p.image, g.image, g.foreground), si_rmse(p.image, g.image, g.foreground),
                         angular_error_deg(p.image, g.image, g.foreground)};
      row.per_material[m] = mm;
      report.mean[m].rmse += mm.rmse / double(pred.size());
      report.mean[m].si_rmse += mm.si_rmse / double(pred.size());
      report.mean[m].angular_error_deg += mm.angular_error_deg / double(pred.size());
    }
    report.images.push_back(std::move(row));
  }
  return report;
}

nlohmann::json to_json(const MetricsReport& report) {
  auto metrics = [](const MaterialMetrics& m) {
    return nlohmann::json{{"rmse", m.rmse}, {"si_rmse", m.si_rmse},
                          {"angular_error_deg", m.angular_error_deg}};
  };
  nlohmann::json j;
  j["render"] = {{"image_size", report.render.image_size},
                 {"coverage", report.render.coverage},
                 {"glossy_exponent", report.render.glossy_exponent},
                 {"mirror_samples", report.render.mirror_samples},
                 {"view", {report.render.view.x(), report.render.view.y(), report.render.view.z()}}};
  for (const auto& [m, v] : report.mean) j["mean"][to_string(m)] = metrics(v);
  j["images"] = nlohmann::json::array();
  for (const auto& row : report.images) {
    nlohmann::json r{{"name", row.name}};
    for (const auto& [m, v] : row.per_material) r[to_string(m)] = metrics(v);
    j["images"].push_back(r);
  }
  j["count"] = report.images.size();
  return j;
}

}  // namespace panolight::eval
