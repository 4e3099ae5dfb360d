#include "panolight/inversion/inversion.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include "panolight/data/rgbe.hpp"
#include "panolight/gan/branches.hpp"
#include "panolight/nn/optim.hpp"

namespace panolight::inversion {

using nn::Tensor;
using nn::Var;

void HyperParams::validate() const {
  for (double v : {perceptual_weight, lambda_n, lambda_l2_r, lambda_l2_rp, eta, beta_l2,
                   initial_w_noise})
    require(std::isfinite(v) && v >= 0, Errc::invalid_argument,
            "inversion: loss weights must be finite and nonnegative");
  require(std::isfinite(interp_alpha) && interp_alpha > 0, Errc::invalid_argument,
          "inversion: interp_alpha must be positive");
  require(steps_latent >= 1 && steps_pivotal >= 1, Errc::invalid_argument,
          "inversion: step counts must be >= 1");
  require(lr_latent > 0 && lr_pivotal > 0, Errc::invalid_argument,
          "inversion: learning rates must be positive");
  require(focal_fraction > 0 && focal_fraction <= 1, Errc::invalid_argument,
          "inversion: focal_fraction must lie in (0, 1]");
}

void to_json(nlohmann::json& j, const HyperParams& hp) {
  j = {{"perceptual_weight", hp.perceptual_weight},
       {"lambda_n", hp.lambda_n},
       {"lambda_l2_r", hp.lambda_l2_r},
       {"lambda_l2_rp", hp.lambda_l2_rp},
       {"eta", hp.eta},
       {"beta_l2", hp.beta_l2},
       {"interp_alpha", hp.interp_alpha},
       {"steps_latent", hp.steps_latent},
       {"steps_pivotal", hp.steps_pivotal},
       {"lr_latent", hp.lr_latent},
       {"lr_pivotal", hp.lr_pivotal},
       {"focal_fraction", hp.focal_fraction},
       {"initial_w_noise", hp.initial_w_noise},
       {"seed", hp.seed}};
}

void from_json(const nlohmann::json& j, HyperParams& hp) {
  auto get = [&j](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  get("perceptual_weight", hp.perceptual_weight);
  get("lambda_n", hp.lambda_n);
  get("lambda_l2_r", hp.lambda_l2_r);
  get("lambda_l2_rp", hp.lambda_l2_rp);
  get("eta", hp.eta);
  get("beta_l2", hp.beta_l2);
  get("interp_alpha", hp.interp_alpha);
  get("steps_latent", hp.steps_latent);
  get("steps_pivotal", hp.steps_pivotal);
  get("lr_latent", hp.lr_latent);
  get("lr_pivotal", hp.lr_pivotal);
  get("focal_fraction", hp.focal_fraction);
  get("initial_w_noise", hp.initial_w_noise);
  get("seed", hp.seed);
}

Observation make_observation(const pano::LdrPanorama& masked, const Mask& visibility,
                             double focal_fraction) {
  require(visibility.rows() == masked.height() && visibility.cols() == masked.width(),
          Errc::shape_mismatch, "observation: visibility mask does not match the panorama");
  require(visibility.any(), Errc::empty_observation, "observation: visibility mask is empty");
  ImageF pixels = masked.pixels();
  for (int c = 0; c < pixels.channels(); ++c)
    pixels.plane(c) = visibility.select(pixels.plane(c), 0.f);
  Observation obs{pano::LdrPanorama(std::move(pixels)), {}};
  obs.masks = pano::make_mask_set(obs.target, visibility, focal_fraction);
  return obs;
}

namespace {

constexpr std::uint64_t kStreamNoise = 1, kStreamWNoise = 2, kStreamWz = 3, kStreamWStd = 4;
constexpr int kWStdSamples = 1000;

void check_observation(const Observation& obs, const gan::Generator<float>& g) {
  const auto& cfg = g.config();
  require(obs.target.height() == cfg.height && obs.target.width() == cfg.width,
          Errc::shape_mismatch, "inversion: observation does not match the generator resolution");
  require(obs.masks.visibility.rows() == cfg.height && obs.masks.visibility.cols() == cfg.width &&
              obs.masks.focal.rows() == cfg.height && obs.masks.focal.cols() == cfg.width,
          Errc::shape_mismatch, "inversion: masks do not match the generator resolution");
  require(obs.masks.visibility.any(), Errc::empty_observation,
          "inversion: visibility mask is empty");
}

/// Per-pixel weight 1 / (3 |mask|) on the mask, 0 elsewhere, as [1, 3, H, W].
Tensor<float> mask_weights(const Mask& mask) {
  const Eigen::Index count = mask.count();
  const int h = int(mask.rows()), w = int(mask.cols());
  Tensor<float> t({1, 3, h, w});
  if (count == 0) return t;
  const float v = 1.f / float(3 * count);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) t.data[t.index(0, c, y, x)] = mask(y, x) ? v : 0.f;
  return t;
}

/// mask as a {0, 1} tensor [1, 1, H, W].
Tensor<float> mask_tensor(const Mask& mask) {
  Tensor<float> t({1, 1, int(mask.rows()), int(mask.cols())});
  for (Eigen::Index y = 0; y < mask.rows(); ++y)
    for (Eigen::Index x = 0; x < mask.cols(); ++x)
      t.data[y * mask.cols() + x] = mask(y, x) ? 1.f : 0.f;
  return t;
}

Var<float> weighted_l2(const Var<float>& pred, const Tensor<float>& target,
                       const Tensor<float>& weights) {
  return nn::sum(nn::mul(nn::square(nn::sub(pred, nn::constant(target))), nn::constant(weights)));
}

/// Loss terms on the observation shared by both phases.
struct ObservationLoss {
  ObservationLoss(const Observation& obs, const PerceptualDistance& d)
      : distance(d),
        mask(mask_tensor(obs.masks.visibility)),
        visible_weights(mask_weights(obs.masks.visibility)),
        focal_weights(mask_weights(obs.masks.focal)) {
    Tensor<float> t = nn::from_image(obs.target.pixels());
    target = nn::mul(nn::constant(t), nn::constant(mask)).value();
  }

  Var<float> perceptual(const Var<float>& ldr) const {
    return distance(nn::mul(ldr, nn::constant(mask)), nn::constant(target));
  }
  Var<float> masked_l2(const Var<float>& ldr) const {
    return weighted_l2(ldr, target, visible_weights);
  }
  Var<float> focal_l2(const Var<float>& ldr) const {
    return weighted_l2(ldr, target, focal_weights);
  }

  const PerceptualDistance& distance;
  Tensor<float> mask, target, visible_weights, focal_weights;
};

Var<float> add_weighted(const Var<float>& acc, const Var<float>& term, double weight) {
  return weight == 0 ? acc : nn::add(acc, nn::scale(term, float(weight)));
}

/// Learning-rate schedule: linear ramp-up over the first 5% of the steps,
/// cosine ramp-down over the last 25%.
double lr_schedule(double t) {
  double ramp = std::min(1.0, (1.0 - t) / 0.25);
  ramp = 0.5 - 0.5 * std::cos(ramp * std::numbers::pi);
  return ramp * std::min(1.0, t / 0.05);
}

/// RMS distance of mapped latents from w_avg.
double w_spread(const gan::Generator<float>& g, std::uint64_t seed) {
  nn::NoGradGuard guard;
  Rng rng(seed);
  const int D = g.config().latent_dim;
  const Tensor<float> w = g.mapping(nn::constant(Tensor<float>::randn({kWStdSamples, D, 1, 1}, rng))).value();
  double acc = 0;
  for (int i = 0; i < kWStdSamples; ++i)
    acc += (w.data.segment(Eigen::Index(i) * D, D) - g.w_avg.data).square().sum();
  return std::sqrt(acc / kWStdSamples);
}

gan::Generator<float> frozen_clone(const gan::Generator<float>& g) {
  gan::Generator<float> out = g.clone();
  out.params().set_requires_grad(false);
  return out;
}

}  // namespace

void append_trace(std::vector<TraceRow>& trace, int step, double objective,
                  const std::string& phase) {
  if (!std::isfinite(objective)) {
    trace.push_back({step, objective, trace.empty() ? objective : trace.back().best});
    throw OptimizationDivergence(
        "non-finite objective in " + phase + " at step " + std::to_string(step), trace);
  }
  trace.push_back({step, objective, trace.empty() ? objective : std::min(trace.back().best, objective)});
}

Var<float> noise_regularizer(const gan::NoiseMaps<float>& noise) {
  Var<float> total = nn::constant(Tensor<float>({1, 1, 1, 1}));
  for (const auto& map : noise) {
    Var<float> n = map;
    while (true) {
      total = nn::add(total, nn::square(nn::mean(nn::mul(n, nn::roll(n, 0, 1)))));
      total = nn::add(total, nn::square(nn::mean(nn::mul(n, nn::roll(n, 1, 0)))));
      if (n.shape()[2] <= 4 || n.shape()[2] % 2 || n.shape()[3] % 2) break;
      n = nn::downsample2x(n);
    }
  }
  return total;
}

Var<float> masked_l2(const Var<float>& pred, const Tensor<float>& target, const Mask& mask) {
  require(pred.shape() == target.shape && pred.shape()[1] == 3 && pred.shape()[2] == mask.rows() &&
              pred.shape()[3] == mask.cols(),
          Errc::shape_mismatch, "masked_l2: shapes differ");
  require(mask.any(), Errc::empty_mask, "masked_l2: mask is empty");
  return weighted_l2(pred, target, mask_weights(mask));
}

double masked_mse(const ImageF& pred, const ImageF& target, const Mask& mask) {
  require(pred.same_shape(target) && pred.height() == mask.rows() && pred.width() == mask.cols(),
          Errc::shape_mismatch, "masked_mse: shapes differ");
  require(mask.any(), Errc::empty_mask, "masked_mse: mask is empty");
  double acc = 0;
  for (int c = 0; c < pred.channels(); ++c) {
    const auto diff = pred.plane(c).array().max(0.f).min(1.f) - target.plane(c).array();
    acc += mask.select(diff.square(), 0.f).cast<double>().sum();
  }
  return acc / double(mask.count() * pred.channels());
}

LatentFit invert_latent(const Observation& obs, const gan::Generator<float>& g_in,
                        const HyperParams& hp, const PerceptualDistance& distance) {
  hp.validate();
  check_observation(obs, g_in);
  const gan::Generator<float> g = frozen_clone(g_in);
  const ObservationLoss loss(obs, distance);

  Rng noise_rng(derive_seed(hp.seed, kStreamNoise));
  Rng w_rng(derive_seed(hp.seed, kStreamWNoise));
  const double w_std = w_spread(g, derive_seed(hp.seed, kStreamWStd));

  Var<float> w = nn::parameter(g.w_avg);
  gan::NoiseMaps<float> noise;
  for (const auto& n : g.random_noise(noise_rng)) noise.push_back(nn::parameter(n.value()));

  std::vector<Var<float>> params{w};
  params.insert(params.end(), noise.begin(), noise.end());
  nn::Adam<float> opt(params, {hp.lr_latent, 0.9, 0.999, 1e-8});

  LatentFit fit;
  for (int step = 0; step < hp.steps_latent; ++step) {
    const double t = double(step) / hp.steps_latent;
    opt.set_lr(hp.lr_latent * lr_schedule(t));
    const double ramp = std::max(0.0, 1.0 - t / 0.75);
    const double w_noise_scale = w_std * hp.initial_w_noise * ramp * ramp;
    Tensor<float> jitter = Tensor<float>::randn(w.shape(), w_rng);
    jitter.data *= float(w_noise_scale);

    opt.zero_grad();
    const Var<float> raw = g.synthesize(nn::add(w, nn::constant(jitter)), {&noise, nullptr});
    const Var<float> ldr = gan::ldr_branch(raw);
    Var<float> objective = nn::scale(loss.perceptual(ldr), float(hp.perceptual_weight));
    objective = add_weighted(objective, noise_regularizer(noise), hp.lambda_n);
    objective = add_weighted(objective, loss.focal_l2(ldr), hp.beta_l2);
    append_trace(fit.trace, step, objective.item(), "inversion latent phase");
    nn::backward(objective);
    opt.step();

    for (auto n : noise) {
      auto& d = n.mutable_value().data;
      d -= d.mean();
      const float rms = std::sqrt(d.square().mean());
      if (rms > 0) d /= rms;
    }
  }

  fit.latent.w = w.value();
  for (const auto& n : noise) fit.latent.noise.push_back(n.value());
  return fit;
}

PivotalFit pivotal_finetune(const gan::LatentState& pivot, const Observation& obs,
                            const gan::Generator<float>& g0_in, const HyperParams& hp,
                            const PerceptualDistance& distance) {
  hp.validate();
  check_observation(obs, g0_in);
  require(pivot.w.shape == nn::Shape{1, g0_in.config().latent_dim, 1, 1} &&
              int(pivot.noise.size()) == g0_in.config().num_conv_layers(),
          Errc::shape_mismatch, "pivotal tuning: pivot latent does not match the generator");
  const gan::Generator<float> g0 = frozen_clone(g0_in);
  gan::Generator<float> g = g0.clone();
  g.params().set_requires_grad(false);
  std::vector<Var<float>> tuned = g.synthesis_parameters();
  for (auto p : tuned) p.set_requires_grad(true);
  nn::Adam<float> opt(tuned, {hp.lr_pivotal, 0.9, 0.999, 1e-8});

  const ObservationLoss loss(obs, distance);
  const gan::NoiseMaps<float> noise = gan::noise_vars(pivot.noise, false);
  const Var<float> w_star = nn::constant(pivot.w);
  Rng z_rng(derive_seed(hp.seed, kStreamWz));
  const int D = g.config().latent_dim;

  PivotalFit fit{g0.clone(), {}};
  for (int step = 0; step < hp.steps_pivotal; ++step) {
    opt.zero_grad();
    const Var<float> ldr = gan::ldr_branch(g.synthesize(w_star, {&noise, nullptr}));
    Var<float> objective = nn::scale(loss.perceptual(ldr), float(hp.perceptual_weight));
    objective = add_weighted(objective, loss.masked_l2(ldr), hp.lambda_l2_r);
    objective = add_weighted(objective, loss.focal_l2(ldr), hp.beta_l2);

    if (hp.eta > 0) {
      Tensor<float> w_r;
      Tensor<float> reference;
      {
        nn::NoGradGuard guard;
        const Tensor<float> w_z = g0.mapping(nn::constant(Tensor<float>::randn({1, D, 1, 1}, z_rng))).value();
        const Eigen::ArrayXf dir = w_z.data - pivot.w.data;
        const float norm = std::sqrt(dir.square().sum());
        w_r = pivot.w;
        if (norm > 0) w_r.data += float(hp.interp_alpha) * dir / norm;
        reference = gan::ldr_branch(g0.synthesize(nn::constant(w_r), {&noise, nullptr})).value();
      }
      const Var<float> drifted = gan::ldr_branch(g.synthesize(nn::constant(w_r), {&noise, nullptr}));
      Var<float> reg = nn::scale(distance(drifted, nn::constant(reference)), float(hp.perceptual_weight));
      reg = nn::add(reg, nn::scale(nn::mean(nn::square(nn::sub(drifted, nn::constant(reference)))),
                                   float(hp.lambda_l2_rp)));
      objective = nn::add(objective, nn::scale(reg, float(hp.eta)));
    }
    append_trace(fit.trace, step, objective.item(), "inversion pivotal phase");
    nn::backward(objective);
    opt.step();
  }

  fit.generator = g.clone();
  return fit;
}

InversionResult invert_observation(const Observation& obs, const gan::ModelCheckpoint& ckpt,
                                   const HyperParams& hp, const PerceptualDistance* distance) {
  std::shared_ptr<const PerceptualDistance> fallback;
  if (!distance) {
    fallback = default_perceptual();
    distance = fallback.get();
  }
  const gan::Generator<float>& g0 = ckpt.generator_ema;
  LatentFit latent = invert_latent(obs, g0, hp, *distance);
  PivotalFit tuned = pivotal_finetune(latent.latent, obs, g0, hp, *distance);
  gan::PanoSample out = gan::render(tuned.generator, ckpt.tone_map, latent.latent);
  return {std::move(latent.latent), std::move(tuned.generator), std::move(latent.trace),
          std::move(tuned.trace), std::move(out.hdr), std::move(out.ldr)};
}

InversionResult estimate_lighting(const ImageF& crop, const pano::CameraSpec& cam,
                                  const gan::ModelCheckpoint& ckpt, const HyperParams& hp,
                                  const PerceptualDistance* distance) {
  hp.validate();
  const auto& cfg = ckpt.generator_config;
  pano::MaskedPanorama masked = pano::lfov_to_masked_pano(crop, cam, cfg.height, cfg.width);
  const Observation obs = make_observation(masked.pano, masked.visibility, hp.focal_fraction);
  return invert_observation(obs, ckpt, hp, distance);
}

void save_result(const InversionResult& result, const gan::ModelCheckpoint& source,
                 const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  require(!ec, Errc::io_error, "cannot create " + dir.string() + ": " + ec.message());
  data::save_hdr(result.hdr_out, dir / "hdr_out.hdr");
  data::write_ppm(result.ldr_out.pixels(), dir / "ldr_out.ppm");
  gan::save_latent(result.latent, dir / "latent.plta");

  gan::ModelCheckpoint theta = source.clone();
  theta.generator_ema.params().copy_from(result.generator.params());
  gan::save_checkpoint(theta, dir / "theta.plta");

  std::ofstream csv(dir / "traces.csv");
  require(bool(csv), Errc::io_error, "cannot write " + (dir / "traces.csv").string());
  csv << "phase,step,objective,best\n";
  csv.precision(9);
  for (const auto& r : result.trace_latent)
    csv << "latent," << r.step << ',' << r.objective << ',' << r.best << '\n';
  for (const auto& r : result.trace_pivotal)
    csv << "pivotal," << r.step << ',' << r.objective << ',' << r.best << '\n';
  require(bool(csv), Errc::io_error, "write failed for " + (dir / "traces.csv").string());
}

}  // namespace panolight::inversion
