#include "panolight/gan/train.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "panolight/core/archive.hpp"
#include "panolight/gan/branches.hpp"
#include "panolight/nn/optim.hpp"

namespace panolight::gan {

using nn::Tensor;
using nn::Var;
namespace fs = std::filesystem;

namespace {

constexpr const char* kLogHeader = "step,loss_G,loss_D,loss_D',R1_D,R1_D'";

Tensor<float> take_batch(const Tensor<float>& all, const std::vector<int>& idx,
                         const std::vector<int>& rolls) {
  const int C = all.c(), H = all.h(), W = all.w();
  Tensor<float> out({int(idx.size()), C, H, W});
  for (std::size_t i = 0; i < idx.size(); ++i)
    for (int c = 0; c < C; ++c)
      for (int y = 0; y < H; ++y) {
        const float* src = &all.data[all.index(idx[i], c, y, 0)];
        float* dst = &out.data[out.index(int(i), c, y, 0)];
        const int r = rolls.empty() ? 0 : rolls[i];
        for (int x = 0; x < W; ++x) dst[(x + r) % W] = src[x];
      }
  return out;
}

Tensor<float> slice_batch(const Tensor<float>& t, int begin, int count) {
  const Eigen::Index per = nn::numel(t.shape) / std::max(t.n(), 1);
  return Tensor<float>({count, t.c(), t.h(), t.w()}, t.data.segment(begin * per, count * per));
}

// Real inputs of both discriminators.
Tensor<float> real_hdr_input(const Tensor<float>& tone_mapped, const pano::ToneMapParams& tm) {
  nn::NoGradGuard guard;
  return hdr_disc_input(nn::constant(tone_mapped), tm).value();
}
Tensor<float> real_ldr_input(const Tensor<float>& tone_mapped) {
  nn::NoGradGuard guard;
  return ldr_branch(nn::constant(tone_mapped)).value();
}

// Style vectors for a batch, with optional style mixing.
std::vector<Var<float>> make_ws(const Generator<float>& g, int n, double mixing_prob, Rng& rng) {
  const int D = g.config().latent_dim;
  const Var<float> w1 = g.mapping(nn::constant(Tensor<float>::randn({n, D, 1, 1}, rng)));
  std::vector<Var<float>> ws(std::size_t(g.config().num_ws()), w1);
  std::uniform_real_distribution<double> u(0, 1);
  if (mixing_prob > 0 && u(rng) < mixing_prob) {
    const Var<float> w2 = g.mapping(nn::constant(Tensor<float>::randn({n, D, 1, 1}, rng)));
    std::uniform_int_distribution<int> cut(1, g.config().num_ws() - 1);
    for (std::size_t i = std::size_t(cut(rng)); i < ws.size(); ++i) ws[i] = w2;
  }
  return ws;
}

std::vector<Tensor<float>> values_of(const std::vector<Var<float>>& vs) {
  std::vector<Tensor<float>> out;
  for (const auto& v : vs) out.push_back(v.value());
  return out;
}

// Path-length regularization. Returns the mean path length of the batch.
double path_length_step(Generator<float>& g, int n, double mixing_prob, double weight,
                        double& pl_mean, Rng& rng) {
  std::vector<Tensor<float>> ws_val;
  {
    nn::NoGradGuard guard;
    ws_val = values_of(make_ws(g, n, mixing_prob, rng));
  }
  const int H = g.config().height, W = g.config().width, K = int(ws_val.size());
  Tensor<float> y = Tensor<float>::randn({n, 3, H, W}, rng);
  y.data /= std::sqrt(float(H) * W);
  const std::uint64_t noise_seed = rng();

  nn::LeakyGates gates;
  auto render_dot = [&](const std::vector<Var<float>>& ws, const Tensor<float>& proj) {
    Rng noise_rng(noise_seed);
    return nn::sum(nn::mul(g.synthesize(ws, {nullptr, &noise_rng}, &gates), nn::constant(proj)));
  };

  // First-order pass: d(y . G(ws)) / d(ws), recording the leaky gates.
  g.params().set_requires_grad(false);
  std::vector<Var<float>> leaves;
  for (const auto& t : ws_val) leaves.push_back(nn::parameter(t));
  nn::backward(render_dot(leaves, y));
  g.params().set_requires_grad(true);

  const int D = g.config().latent_dim;
  std::vector<double> lengths(std::size_t(n), 0.0);
  float max_abs = 0;
  for (auto& leaf : leaves) {
    const auto& gr = leaf.grad().data;
    max_abs = std::max(max_abs, gr.abs().maxCoeff());
    for (int i = 0; i < n; ++i) lengths[std::size_t(i)] += gr.segment(Eigen::Index(i) * D, D).square().sum();
  }
  double mean_len = 0;
  for (auto& l : lengths) {
    l = std::sqrt(l / K);
    mean_len += l / n;
  }
  const double a = pl_mean;
  pl_mean += 0.01 * (mean_len - pl_mean);
  if (max_abs <= 0) return mean_len;

  // d(L_n - a)^2/d(theta) = 2 (L_n - a) / (K L_n) * d(y . J v)/d(theta), with
  // J v taken as a central difference along v = the first-order gradient and
  // the gates of the first pass frozen.
  const float eps = 1e-2f / max_abs;
  Tensor<float> proj = y;
  const Eigen::Index per = nn::numel(y.shape) / n;
  for (int i = 0; i < n; ++i) {
    const double li = std::max(lengths[std::size_t(i)], 1e-8);
    const double coef = weight * 2.0 * (li - a) / (K * li * n);
    proj.data.segment(i * per, per) *= float(coef / (2.0 * eps));
  }
  std::vector<Var<float>> plus, minus;
  for (std::size_t k = 0; k < leaves.size(); ++k) {
    Tensor<float> p = ws_val[k], m = ws_val[k];
    p.data += eps * leaves[k].grad().data;
    m.data -= eps * leaves[k].grad().data;
    plus.push_back(nn::constant(std::move(p)));
    minus.push_back(nn::constant(std::move(m)));
  }
  gates.replay();
  const Var<float> d_plus = render_dot(plus, proj);
  gates.replay();
  nn::backward(nn::sub(d_plus, render_dot(minus, proj)));
  return mean_len;
}

struct Optimizers {
  nn::Adam<float> g, d, dp;
};

void restore_optimizer(nn::Adam<float>& opt, const std::string& key, const ParamSet<float>& params,
                       const ModelCheckpoint& ckpt) {
  auto it = ckpt.optimizer_steps.find(key);
  if (it == ckpt.optimizer_steps.end()) return;
  opt.set_steps(it->second);
  for (std::size_t i = 0; i < params.items().size(); ++i) {
    const std::string& name = params.items()[i].first;
    auto m = ckpt.optimizer_moments.find(key + ".m." + name);
    auto v = ckpt.optimizer_moments.find(key + ".v." + name);
    if (m == ckpt.optimizer_moments.end() || v == ckpt.optimizer_moments.end())
      fail(Errc::archive_format, "checkpoint lacks optimizer state for " + name);
    opt.first_moments()[i] = m->second;
    opt.second_moments()[i] = v->second;
  }
}

void store_optimizer(nn::Adam<float>& opt, const std::string& key, const ParamSet<float>& params,
                     ModelCheckpoint& ckpt) {
  ckpt.optimizer_steps[key] = opt.steps();
  for (std::size_t i = 0; i < params.items().size(); ++i) {
    const std::string& name = params.items()[i].first;
    ckpt.optimizer_moments[key + ".m." + name] = opt.first_moments()[i];
    ckpt.optimizer_moments[key + ".v." + name] = opt.second_moments()[i];
  }
}

// Keeps rows with step <= last_step; creates the file with a header if absent.
void prepare_log(const fs::path& path, long long last_step) {
  std::vector<std::string> keep;
  if (fs::exists(path)) {
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      if (std::stoll(line.substr(0, line.find(','))) <= last_step) keep.push_back(line);
    }
  }
  std::ofstream out(path, std::ios::trunc);
  out << kLogHeader << "\n";
  for (const auto& l : keep) out << l << "\n";
  if (!out) fail(Errc::io_error, "cannot write " + path.string());
}

void check_finite(double v, const char* what, long long step) {
  if (!std::isfinite(v)) {
    std::ostringstream msg;
    msg << "non-finite " << what << " (" << v << ") at step " << step;
    fail(Errc::divergence, msg.str());
  }
}

}  // namespace

Tensor<float> load_split_tensor(const data::DatasetManifest& manifest, const fs::path& dir,
                                data::Split split) {
  const TensorArchive archive = TensorArchive::load(dir / manifest.train_tensors);
  const std::string key = split == data::Split::train ? "train" : "test";
  if (!archive.contains(key)) fail(Errc::archive_format, "dataset tensors lack split " + key);
  const ArchiveTensor& a = archive.get(key);
  if (a.shape.size() != 4) fail(Errc::archive_format, "dataset tensor is not 4-D");
  Tensor<float> t({int(a.shape[0]), int(a.shape[1]), int(a.shape[2]), int(a.shape[3])});
  t.data = Eigen::Map<const Eigen::ArrayXf>(a.values.data(), Eigen::Index(a.values.size()));
  return t;
}

template <typename S>
double r1_penalty(Discriminator<S>& disc, const Tensor<S>& reals, double weight) {
  auto& params = disc.params();
  const int n = reals.n();
  params.set_requires_grad(false);
  Var<S> x = nn::parameter(reals);
  nn::LeakyGates gates;
  nn::backward(nn::sum(disc(x, &gates)));
  params.set_requires_grad(true);
  const Tensor<S>& g = x.grad();
  const double value = double(g.data.square().sum()) / n;
  const S max_abs = g.data.abs().maxCoeff();
  if (weight == 0 || max_abs <= 0) return value;
  // d/dtheta |g|^2 = 2 d/dtheta (v . dD/dx) at fixed v = g. With the leaky
  // gates of x frozen, D is affine in its input, so
  // v . dD/dx = (D(x + eps v) - D(x - eps v)) / (2 eps) exactly.
  gates.replay();
  const S eps = S(1) / max_abs;
  Tensor<S> plus = reals, minus = reals;
  plus.data += eps * g.data;
  minus.data -= eps * g.data;
  const Var<S> d_plus = nn::sum(disc(nn::constant(std::move(plus)), &gates));
  gates.replay();
  const Var<S> d_minus = nn::sum(disc(nn::constant(std::move(minus)), &gates));
  nn::backward(nn::scale(nn::sub(d_plus, d_minus), S(weight / (2.0 * eps))));
  return value;
}

template double r1_penalty(Discriminator<float>&, const Tensor<float>&, double);
template double r1_penalty(Discriminator<double>&, const Tensor<double>&, double);

ModelCheckpoint train(const TrainRequest& request) {
  const data::DatasetManifest manifest = data::load_manifest(request.data_dir / "manifest.json");
  fs::create_directories(request.out_dir);

  std::optional<ModelCheckpoint> loaded;
  if (request.resume_from) {
    loaded.emplace(load_checkpoint(*request.resume_from));
    loaded->train_config.steps = request.preset.train.steps;
    loaded->train_config.kimg = request.preset.train.kimg;
  } else {
    loaded.emplace(request.preset.generator, request.preset.train, manifest.tone_map,
                   request.preset.train.seed);
    loaded->generator_ema.params().copy_from(loaded->generator.params());
  }
  ModelCheckpoint& ckpt = *loaded;
  const GeneratorConfig& gc = ckpt.generator_config;
  const TrainConfig& tc = ckpt.train_config;
  tc.validate();
  if (manifest.height != gc.height || manifest.width != gc.width)
    fail(Errc::shape_mismatch, "dataset resolution " + std::to_string(manifest.height) + "x" +
                                   std::to_string(manifest.width) + " does not match model " +
                                   std::to_string(gc.height) + "x" + std::to_string(gc.width));
  if (!(manifest.tone_map == ckpt.tone_map))
    fail(Errc::invalid_argument, "dataset tone map differs from the checkpoint's");

  const Tensor<float> reals_all = load_split_tensor(manifest, request.data_dir, data::Split::train);
  const pano::ToneMapParams tm = ckpt.tone_map;

  nn::AdamOptions gopt{tc.lr_g, tc.beta1, tc.beta2, 1e-8};
  nn::AdamOptions dopt{tc.lr_d, tc.beta1, tc.beta2, 1e-8};
  Optimizers opt{nn::Adam<float>(ckpt.generator.params().vars(), gopt),
                 nn::Adam<float>(ckpt.disc_hdr.params().vars(), dopt),
                 nn::Adam<float>(ckpt.disc_ldr.params().vars(), dopt)};
  restore_optimizer(opt.g, "G", ckpt.generator.params(), ckpt);
  restore_optimizer(opt.d, "D", ckpt.disc_hdr.params(), ckpt);
  restore_optimizer(opt.dp, "Dp", ckpt.disc_ldr.params(), ckpt);

  const fs::path log_path = request.out_dir / "train_log.csv";
  const fs::path ckpt_path = request.out_dir / "checkpoint.plta";
  prepare_log(log_path, ckpt.step);
  std::ofstream log(log_path, std::ios::app);

  auto save = [&] {
    store_optimizer(opt.g, "G", ckpt.generator.params(), ckpt);
    store_optimizer(opt.d, "D", ckpt.disc_hdr.params(), ckpt);
    store_optimizer(opt.dp, "Dp", ckpt.disc_ldr.params(), ckpt);
    ckpt.generator_ema.estimate_w_avg(1000, derive_seed(tc.seed, 0x77a));
    ckpt.generator.w_avg = ckpt.generator_ema.w_avg;
    save_checkpoint(ckpt, ckpt_path);
  };

  const int B = tc.batch;
  const int mb = tc.micro_batch > 0 ? tc.micro_batch : B;
  const long long total = tc.total_steps();
  const float ema_beta =
      tc.ema_kimg > 0 ? float(std::pow(0.5, B / (tc.ema_kimg * 1000.0))) : 0.0f;
  TrainLogRow row;
  Generator<float>& G = ckpt.generator;

  for (long long step = ckpt.step + 1; step <= total; ++step) {
    Rng rng(derive_seed(tc.seed, std::uint64_t(step)));
    row = TrainLogRow{step, 0, 0, 0, row.r1_d, row.r1_dp};
    std::uniform_int_distribution<int> pick(0, reals_all.n() - 1);
    std::uniform_int_distribution<int> shift(0, gc.width - 1);
    std::vector<int> idx(static_cast<std::size_t>(B)), rolls;
    for (int& i : idx) i = pick(rng);
    if (tc.augment_roll)
      for (int i = 0; i < B; ++i) rolls.push_back(shift(rng));
    const Tensor<float> reals = take_batch(reals_all, idx, rolls);
    const Tensor<float> real_hdr = real_hdr_input(reals, tm);
    const Tensor<float> real_ldr = real_ldr_input(reals);

    // Discriminator update.
    opt.d.zero_grad();
    opt.dp.zero_grad();
    const bool do_r1 = tc.r1_gamma > 0 && (step - 1) % tc.r1_interval == 0;
    double r1_d = 0, r1_dp = 0;
    for (int b0 = 0; b0 < B; b0 += mb) {
      const int n = std::min(mb, B - b0);
      const float frac = float(n) / float(B);
      Tensor<float> fake;
      {
        nn::NoGradGuard guard;
        fake = G.synthesize(make_ws(G, n, tc.style_mixing_prob, rng), {nullptr, &rng}).value();
      }
      const Var<float> fake_v = nn::constant(fake);
      const Var<float> rh = nn::constant(slice_batch(real_hdr, b0, n));
      const Var<float> rl = nn::constant(slice_batch(real_ldr, b0, n));
      const Var<float> loss_d = nn::add(nn::mean(nn::softplus(ckpt.disc_hdr(hdr_disc_input(fake_v, tm)))),
                                        nn::mean(nn::softplus(nn::scale(ckpt.disc_hdr(rh), -1.0f))));
      const Var<float> loss_dp = nn::add(nn::mean(nn::softplus(ckpt.disc_ldr(ldr_branch(fake_v)))),
                                         nn::mean(nn::softplus(nn::scale(ckpt.disc_ldr(rl), -1.0f))));
      row.loss_d += frac * loss_d.item();
      row.loss_dp += frac * loss_dp.item();
      check_finite(row.loss_d, "loss_D", step);
      check_finite(row.loss_dp, "loss_D'", step);
      nn::backward(nn::scale(nn::add(loss_d, loss_dp), frac));
      if (do_r1) {
        const double w = tc.r1_gamma * tc.r1_interval / B;
        r1_d += r1_penalty(ckpt.disc_hdr, slice_batch(real_hdr, b0, n), w) * n / B;
        r1_dp += r1_penalty(ckpt.disc_ldr, slice_batch(real_ldr, b0, n), w) * n / B;
      }
    }
    if (do_r1) {
      check_finite(r1_d, "R1_D", step);
      check_finite(r1_dp, "R1_D'", step);
      row.r1_d = r1_d;
      row.r1_dp = r1_dp;
    }
    opt.d.step();
    opt.dp.step();

    // Generator update; discriminators only pass gradients through.
    ckpt.disc_hdr.params().set_requires_grad(false);
    ckpt.disc_ldr.params().set_requires_grad(false);
    opt.g.zero_grad();
    for (int b0 = 0; b0 < B; b0 += mb) {
      const int n = std::min(mb, B - b0);
      const float frac = float(n) / float(B);
      const Var<float> img = G.synthesize(make_ws(G, n, tc.style_mixing_prob, rng), {nullptr, &rng});
      const Var<float> loss_g =
          nn::add(nn::mean(nn::softplus(nn::scale(ckpt.disc_hdr(hdr_disc_input(img, tm)), -1.0f))),
                  nn::mean(nn::softplus(nn::scale(ckpt.disc_ldr(ldr_branch(img)), -1.0f))));
      row.loss_g += frac * loss_g.item();
      check_finite(row.loss_g, "loss_G", step);
      nn::backward(nn::scale(loss_g, frac));
    }
    ckpt.disc_hdr.params().set_requires_grad(true);
    ckpt.disc_ldr.params().set_requires_grad(true);
    if (tc.pl_weight > 0 && (step - 1) % tc.pl_interval == 0) {
      const double len = path_length_step(G, std::max(1, mb / 2), tc.style_mixing_prob,
                                          tc.pl_weight * tc.pl_interval, ckpt.pl_mean, rng);
      check_finite(len, "path length", step);
    }
    opt.g.step();
    ckpt.generator_ema.params().ema_toward(G.params(), ema_beta);

    ckpt.step = step;
    log << row.step << ',' << row.loss_g << ',' << row.loss_d << ',' << row.loss_dp << ','
        << row.r1_d << ',' << row.r1_dp << '\n';
    if (request.on_step) request.on_step(row);
    if (step % tc.checkpoint_every == 0) {
      log.flush();
      save();
    }
  }
  log.flush();
  if (!log) fail(Errc::io_error, "cannot append to " + log_path.string());
  save();
  return std::move(ckpt);
}

LogitReport evaluate_logits(const ModelCheckpoint& ckpt, const Tensor<float>& reals, int count,
                            std::uint64_t seed) {
  nn::NoGradGuard guard;
  Rng rng(seed);
  LogitReport r;
  const auto rh = nn::constant(real_hdr_input(reals, ckpt.tone_map));
  const auto rl = nn::constant(real_ldr_input(reals));
  r.real_hdr = ckpt.disc_hdr(rh).value().data.mean();
  r.real_ldr = ckpt.disc_ldr(rl).value().data.mean();
  const Generator<float>& G = ckpt.generator;
  const Var<float> fake = G.synthesize(make_ws(G, count, 0.0, rng), {nullptr, &rng});
  r.fake_hdr = ckpt.disc_hdr(hdr_disc_input(fake, ckpt.tone_map)).value().data.mean();
  r.fake_ldr = ckpt.disc_ldr(ldr_branch(fake)).value().data.mean();
  return r;
}

}  // namespace panolight::gan
