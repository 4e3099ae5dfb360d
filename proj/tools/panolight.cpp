// Command-line front end: synth-data, train, sample, crop, invert, edit, eval.
//
// Exit codes: 0 success, 2 bad arguments (including unreadable inputs and
// inconsistent settings), 1 failure while a stage runs. Failures print one
// JSON object {"error", "message"} on stderr.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "panolight/data/dataset.hpp"
#include "panolight/data/rgbe.hpp"
#include "panolight/editing/editing.hpp"
#include "panolight/eval/metrics.hpp"
#include "panolight/gan/sample.hpp"
#include "panolight/gan/train.hpp"
#include "panolight/inversion/inversion.hpp"

namespace fs = std::filesystem;
using namespace panolight;
using nlohmann::json;

namespace {

/// Raised while resolving a command's settings; maps to exit code 2.
struct UsageError : Error {
  using Error::Error;
};

[[noreturn]] void usage(const std::string& message) { throw UsageError(Errc::invalid_argument, message); }

void print_error(const std::string& code, const std::string& message) {
  std::cerr << json{{"error", code}, {"message", message}}.dump() << std::endl;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  require(!ec, Errc::io_error, "cannot create " + dir.string() + ": " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
  require(bool(out), Errc::io_error, "cannot write " + path.string());
}

/// Runs `resolve` (usage errors) and then `run` (runtime errors).
struct Command {
  CLI::App* app = nullptr;
  std::function<void()> resolve;
  std::function<void()> run;
};

/// The parsed subcommand's settings as a TOML section that --config accepts.
std::string config_echo(const CLI::App& root) {
  for (const CLI::App* sub : root.get_subcommands())
    return "[" + sub->get_name() + "]\n" + sub->config_to_str(true, false);
  return root.config_to_str(true, false);
}

// synth-data ---------------------------------------------------------------

struct SynthArgs {
  fs::path out;
  std::string source;
  int count = 200;
  std::uint64_t seed = 0;
  int resolution = 64;
  double split_ratio = 0.8;
};

Command add_synth(CLI::App& root, SynthArgs& a) {
  Command c;
  c.app = root.add_subcommand("synth-data", "Build a dataset from a synthetic corpus or a directory of .hdr files");
  c.app->add_option("--out", a.out, "Dataset directory")->required();
  c.app->add_option("--count", a.count, "Synthetic panoramas")->capture_default_str();
  c.app->add_option("--seed", a.seed, "Corpus and split seed")->capture_default_str();
  c.app->add_option("--resolution", a.resolution, "Panorama height H (width 2H)")->capture_default_str();
  c.app->add_option("--split-ratio", a.split_ratio, "Training fraction")->capture_default_str();
  c.app->add_option("--source", a.source, "Directory of .hdr panoramas instead of the synthetic corpus")
      ->check(CLI::ExistingDirectory);
  c.resolve = [&a] {
    if (a.source.empty() && a.count < 1) usage("--count must be >= 1");
    if (a.resolution < 4) usage("--resolution must be >= 4");
    if (!(a.split_ratio > 0 && a.split_ratio <= 1)) usage("--split-ratio must lie in (0, 1]");
  };
  c.run = [&a, &root] {
    data::PrepareOptions po;
    if (a.source.empty())
      po.synthetic = data::SyntheticSource{a.count, a.seed};
    else
      po.source_dir = fs::path(a.source);
    po.out_dir = a.out;
    po.height = a.resolution;
    po.width = 2 * a.resolution;
    po.split_ratio = a.split_ratio;
    po.seed = a.seed;
    const data::DatasetManifest m = data::prepare_dataset(po);
    write_text(a.out / "config.toml", config_echo(root));
    std::cout << json{{"entries", m.entries.size()},
                      {"train", m.count(data::Split::train)},
                      {"test", m.count(data::Split::test)},
                      {"alpha", m.tone_map.alpha}}
                     .dump()
              << std::endl;
  };
  return c;
}

// train --------------------------------------------------------------------

struct TrainArgs {
  fs::path data, out;
  std::string preset = "toy", resume;
  int resolution = 0, batch = 0, latent_dim = 0, channel_base = 0, channel_max = 0;
  int checkpoint_every = 0;
  long long steps = -1;
  double lr = 0, r1_gamma = -1;
  std::uint64_t seed = 0;
  gan::Preset resolved;
};

Command add_train(CLI::App& root, TrainArgs& a) {
  Command c;
  c.app = root.add_subcommand("train", "Train the dual-branch generator and both discriminators");
  auto* app = c.app;
  app->add_option("--data", a.data, "Dataset directory (manifest.json)")->required()->check(CLI::ExistingDirectory);
  app->add_option("--out", a.out, "Run directory")->required();
  app->add_option("--preset", a.preset, "toy or paper")->check(CLI::IsMember({"toy", "paper"}))->capture_default_str();
  app->add_option("--resolution", a.resolution, "Output height H (width 2H)");
  app->add_option("--steps", a.steps, "Optimizer steps");
  app->add_option("--batch", a.batch, "Batch size");
  app->add_option("--lr", a.lr, "Adam learning rate for G, D and D'");
  app->add_option("--r1-gamma", a.r1_gamma, "R1 weight");
  app->add_option("--latent-dim", a.latent_dim, "Latent size");
  app->add_option("--channel-base", a.channel_base, "Channel budget constant");
  app->add_option("--channel-max", a.channel_max, "Channel cap");
  app->add_option("--checkpoint-every", a.checkpoint_every, "Checkpoint interval in steps");
  app->add_option("--seed", a.seed, "Training seed")->capture_default_str();
  app->add_option("--resume", a.resume, "Checkpoint to resume from")->check(CLI::ExistingFile);
  c.resolve = [&a, app] {
    gan::Preset p = gan::preset_by_name(a.preset);
    const data::DatasetManifest m = data::load_manifest(a.data / "manifest.json");
    if (app->count("--resolution") == 0) a.resolution = a.preset == "toy" ? m.height : p.generator.height;
    if (a.resolution != p.generator.height) {
      const gan::GeneratorConfig g = p.generator;
      if (a.preset == "toy") p = gan::toy_preset(a.resolution);
      p.generator.height = a.resolution;
      p.generator.width = 2 * a.resolution;
      p.generator.latent_dim = g.latent_dim;
    }
    if (app->count("--steps")) p.train.steps = a.steps, p.train.kimg = 0;
    if (app->count("--batch")) p.train.batch = a.batch, p.train.micro_batch = 0;
    if (app->count("--lr")) p.train.lr_g = p.train.lr_d = a.lr;
    if (app->count("--r1-gamma")) p.train.r1_gamma = a.r1_gamma;
    if (app->count("--latent-dim")) p.generator.latent_dim = a.latent_dim;
    if (app->count("--channel-base")) p.generator.channel_base = a.channel_base;
    if (app->count("--channel-max")) p.generator.channel_max = a.channel_max;
    if (app->count("--checkpoint-every")) p.train.checkpoint_every = a.checkpoint_every;
    p.train.seed = a.seed;
    try {
      p.generator.validate();
      p.train.validate();
    } catch (const Error& e) {
      usage(e.what());
    }
    if (p.generator.height != m.height || p.generator.width != m.width)
      usage("model resolution " + std::to_string(p.generator.height) + "x" +
            std::to_string(p.generator.width) + " does not match the dataset (" +
            std::to_string(m.height) + "x" + std::to_string(m.width) + ")");
    a.resolved = p;
  };
  c.run = [&a, &root] {
    ensure_dir(a.out);
    write_text(a.out / "config.toml", config_echo(root));
    write_text(a.out / "preset.json",
               json{{"generator", a.resolved.generator}, {"train", a.resolved.train}}.dump(2));
    gan::TrainRequest req;
    req.data_dir = a.data;
    req.out_dir = a.out;
    req.preset = a.resolved;
    if (!a.resume.empty()) req.resume_from = fs::path(a.resume);
    const long long total = a.resolved.train.total_steps();
    const long long every = std::max<long long>(1, total / 20);
    req.on_step = [every](const gan::TrainLogRow& r) {
      if (r.step % every == 0)
        std::cerr << "step " << r.step << "  G " << r.loss_g << "  D " << r.loss_d << "  D' "
                  << r.loss_dp << std::endl;
    };
    const gan::ModelCheckpoint ckpt = gan::train(req);
    std::cout << json{{"checkpoint", (a.out / "checkpoint.plta").string()}, {"step", ckpt.step}}.dump()
              << std::endl;
  };
  return c;
}

// sample -------------------------------------------------------------------

struct SampleArgs {
  fs::path ckpt, out;
  int count = 4;
  std::uint64_t seed = 0;
  double truncation = 1.0;
};

Command add_sample(CLI::App& root, SampleArgs& a) {
  Command c;
  c.app = root.add_subcommand("sample", "Draw panoramas and their latents from a checkpoint");
  c.app->add_option("--ckpt", a.ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
  c.app->add_option("--out", a.out, "Output directory")->required();
  c.app->add_option("--count", a.count, "Samples")->capture_default_str();
  c.app->add_option("--seed", a.seed, "Sampling seed")->capture_default_str();
  c.app->add_option("--truncation", a.truncation, "Truncation psi")->capture_default_str();
  c.resolve = [&a] {
    if (a.count < 1) usage("--count must be >= 1");
  };
  c.run = [&a, &root] {
    const gan::ModelCheckpoint ckpt = gan::load_checkpoint(a.ckpt);
    ensure_dir(a.out);
    write_text(a.out / "config.toml", config_echo(root));
    for (int i = 0; i < a.count; ++i) {
      const gan::LatentState z = gan::sample_latent(ckpt, a.seed, i, a.truncation);
      const gan::PanoSample s = gan::render(ckpt.generator_ema, ckpt.tone_map, z);
      const std::string stem = "sample_" + std::to_string(i);
      data::save_hdr(s.hdr, a.out / (stem + ".hdr"));
      data::write_ppm(s.ldr.pixels(), a.out / (stem + ".ppm"));
      gan::save_latent(z, a.out / (stem + ".latent.plta"));
    }
    std::cout << json{{"count", a.count}, {"out", a.out.string()}}.dump() << std::endl;
  };
  return c;
}

// crop ---------------------------------------------------------------------

struct CameraArgs {
  double fov = 90, fov_v = 0, yaw = 0, pitch = 0;

  void add(CLI::App* app) {
    app->add_option("--fov", fov, "Horizontal field of view in degrees")->capture_default_str();
    app->add_option("--fov-v", fov_v, "Vertical field of view (default: from the aspect ratio)");
    app->add_option("--yaw", yaw, "Longitude of the optical axis in degrees")->capture_default_str();
    app->add_option("--pitch", pitch, "Elevation of the optical axis in degrees")->capture_default_str();
  }

  pano::CameraSpec spec(int crop_w, int crop_h) const {
    pano::CameraSpec cam;
    cam.fov_h = fov;
    cam.fov_v = fov_v > 0 ? fov_v
                          : 2 * std::atan(std::tan(fov * std::numbers::pi / 360) * crop_h / crop_w) *
                                180 / std::numbers::pi;
    cam.yaw = yaw;
    cam.pitch = pitch;
    cam.crop_w = crop_w;
    cam.crop_h = crop_h;
    try {
      cam.validate();
    } catch (const Error& e) {
      usage(e.what());
    }
    return cam;
  }
};

struct CropArgs {
  fs::path pano, out;
  std::string ckpt;
  int width = 128, height = 96;
  double alpha = 0.5;
  CameraArgs camera;
};

Command add_crop(CLI::App& root, CropArgs& a) {
  Command c;
  c.app = root.add_subcommand("crop", "Cut a tone-mapped LDR perspective crop out of an HDR panorama");
  c.app->add_option("--pano", a.pano, "Source .hdr panorama")->required()->check(CLI::ExistingFile);
  c.app->add_option("--out", a.out, "Output .ppm")->required();
  c.app->add_option("--width", a.width, "Crop width")->capture_default_str();
  c.app->add_option("--height", a.height, "Crop height")->capture_default_str();
  c.app->add_option("--alpha", a.alpha, "Tone-map alpha (ignored with --ckpt)")->capture_default_str();
  c.app->add_option("--ckpt", a.ckpt, "Take the tone map from this checkpoint")->check(CLI::ExistingFile);
  a.camera.add(c.app);
  c.resolve = [&a] {
    a.camera.spec(a.width, a.height);
    if (!(a.alpha > 0)) usage("--alpha must be positive");
  };
  c.run = [&a, &root] {
    pano::ToneMapParams tm;
    tm.alpha = a.alpha;
    if (!a.ckpt.empty()) tm = gan::load_checkpoint(a.ckpt).tone_map;
    const data::TestPair pair = data::make_test_pair(data::load_hdr(a.pano), a.camera.spec(a.width, a.height), tm);
    if (a.out.has_parent_path()) ensure_dir(a.out.parent_path());
    data::write_ppm(pair.crop, a.out);
    write_text(fs::path(a.out).replace_extension(".config.toml"), config_echo(root));
    std::cout << json{{"crop", a.out.string()}}.dump() << std::endl;
  };
  return c;
}

// invert -------------------------------------------------------------------

struct InvertArgs {
  fs::path ckpt, image, out;
  CameraArgs camera;
  inversion::HyperParams hp;
};

ImageF load_crop(const fs::path& path) {
  const std::string ext = path.extension().string();
  if (ext == ".hdr" || ext == ".pic") {
    ImageF img = data::read_rgbe(path);
    img.array() = img.array().max(0.f).min(1.f);
    return img;
  }
  return data::read_ppm(path);
}

Command add_invert(CLI::App& root, InvertArgs& a) {
  Command c;
  c.app = root.add_subcommand("invert", "Estimate an HDR panorama from an LDR crop");
  auto* app = c.app;
  auto& hp = a.hp;
  app->add_option("--ckpt", a.ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
  app->add_option("--image", a.image, "LDR crop (.ppm, or .hdr clamped to [0, 1])")->required()->check(CLI::ExistingFile);
  app->add_option("--out", a.out, "Result directory")->required();
  a.camera.add(app);
  app->add_option("--steps-latent", hp.steps_latent, "Latent-phase steps")->capture_default_str();
  app->add_option("--steps-pivotal", hp.steps_pivotal, "Pivotal-tuning steps")->capture_default_str();
  app->add_option("--lr-latent", hp.lr_latent, "Latent-phase learning rate")->capture_default_str();
  app->add_option("--lr-pivotal", hp.lr_pivotal, "Pivotal-tuning learning rate")->capture_default_str();
  app->add_option("--lambda-n", hp.lambda_n, "Noise regularizer weight")->capture_default_str();
  app->add_option("--lambda-l2-r", hp.lambda_l2_r, "Masked L2 weight in pivotal tuning")->capture_default_str();
  app->add_option("--lambda-l2-rp", hp.lambda_l2_rp, "L2 weight of the locality regularizer")->capture_default_str();
  app->add_option("--eta", hp.eta, "Locality regularizer weight")->capture_default_str();
  app->add_option("--beta-l2", hp.beta_l2, "Focal L2 weight")->capture_default_str();
  app->add_option("--alpha", hp.interp_alpha, "Distance of the regularizer latent from w*")->capture_default_str();
  app->add_option("--focal-fraction", hp.focal_fraction, "Brightest fraction of visible pixels")->capture_default_str();
  app->add_option("--initial-w-noise", hp.initial_w_noise, "Initial latent jitter")->capture_default_str();
  app->add_option("--seed", hp.seed, "Optimization seed")->capture_default_str();
  c.resolve = [&a] {
    try {
      a.hp.validate();
    } catch (const Error& e) {
      usage(e.what());
    }
  };
  c.run = [&a, &root] {
    const ImageF crop = load_crop(a.image);
    const pano::CameraSpec cam = a.camera.spec(crop.width(), crop.height());
    const gan::ModelCheckpoint ckpt = gan::load_checkpoint(a.ckpt);
    const auto distance = inversion::default_perceptual();
    const inversion::InversionResult r = inversion::estimate_lighting(crop, cam, ckpt, a.hp, distance.get());
    inversion::save_result(r, ckpt, a.out);
    write_text(a.out / "config.toml", config_echo(root));
    write_text(a.out / "hyperparams.json",
               json{{"hyperparams", a.hp}, {"perceptual", distance->name()}}.dump(2));
    std::cout << json{{"out", a.out.string()},
                      {"latent_objective", r.trace_latent.back().objective},
                      {"pivotal_objective", r.trace_pivotal.back().objective},
                      {"hdr_max", r.hdr_out.max_value()}}
                     .dump()
              << std::endl;
  };
  return c;
}

// edit ---------------------------------------------------------------------

struct EditArgs {
  fs::path ckpt, latent, out;
  std::string bbox;
  editing::EditSpec spec;
};

void write_trace(const std::vector<inversion::TraceRow>& trace, const fs::path& path) {
  std::ofstream csv(path);
  csv << "step,objective,best\n";
  csv.precision(9);
  for (const auto& r : trace) csv << r.step << ',' << r.objective << ',' << r.best << '\n';
  require(bool(csv), Errc::io_error, "cannot write " + path.string());
}

Command add_edit(CLI::App& root, EditArgs& a) {
  Command c;
  c.app = root.add_subcommand("edit", "Brighten or dim a box of a panorama through its latent");
  auto* app = c.app;
  app->add_option("--ckpt", a.ckpt, "Checkpoint (e.g. theta.plta from invert)")->required()->check(CLI::ExistingFile);
  app->add_option("--latent", a.latent, "Latent file (from sample or invert)")->required()->check(CLI::ExistingFile);
  app->add_option("--bbox", a.bbox, "u0,v0,u1,v1 in panorama pixels, half-open")->required();
  app->add_option("--delta", a.spec.delta, "+1 dims, -1 brightens")->capture_default_str();
  app->add_option("--steps", a.spec.steps, "Optimizer steps")->capture_default_str();
  app->add_option("--lr", a.spec.lr, "Learning rate")->capture_default_str();
  app->add_option("--out", a.out, "Output directory")->required();
  c.resolve = [&a] {
    try {
      a.spec.bbox = editing::parse_bbox(a.bbox);
    } catch (const Error& e) {
      usage(e.what());
    }
  };
  c.run = [&a, &root] {
    const gan::ModelCheckpoint ckpt = gan::load_checkpoint(a.ckpt);
    const gan::LatentState z = gan::load_latent(a.latent);
    try {
      a.spec.validate(ckpt.generator_config.height, ckpt.generator_config.width);
    } catch (const Error& e) {
      throw UsageError(e.code(), e.what());
    }
    const editing::EditResult r = editing::edit_lighting(z, ckpt.generator_ema, ckpt.tone_map, a.spec);
    ensure_dir(a.out);
    data::save_hdr(r.before.hdr, a.out / "before.hdr");
    data::save_hdr(r.after.hdr, a.out / "after.hdr");
    data::write_ppm(r.before.ldr.pixels(), a.out / "before.ppm");
    data::write_ppm(r.after.ldr.pixels(), a.out / "after.ppm");
    gan::save_latent({r.w, z.noise}, a.out / "latent.plta");
    write_trace(r.trace, a.out / "trace.csv");
    write_text(a.out / "config.toml", config_echo(root));
    std::cout << json{{"out", a.out.string()},
                      {"objective", r.trace.back().objective},
                      {"hdr_max_before", r.before.hdr.max_value()},
                      {"hdr_max_after", r.after.hdr.max_value()}}
                     .dump()
              << std::endl;
  };
  return c;
}

// eval ---------------------------------------------------------------------

struct EvalArgs {
  fs::path pred_dir, gt_dir, out;
  int sphere_size = 128;
  double glossy = 32;
  std::vector<std::string> names;
};

std::vector<std::string> hdr_names(const fs::path& dir) {
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".hdr") names.push_back(e.path().filename().string());
  std::sort(names.begin(), names.end());
  return names;
}

Command add_eval(CLI::App& root, EvalArgs& a) {
  Command c;
  c.app = root.add_subcommand("eval", "Sphere-rendering metrics of predicted vs ground-truth panoramas");
  c.app->add_option("--pred-dir", a.pred_dir, "Predicted .hdr panoramas")->required()->check(CLI::ExistingDirectory);
  c.app->add_option("--gt-dir", a.gt_dir, "Ground-truth .hdr panoramas, same file names")->required()->check(CLI::ExistingDirectory);
  c.app->add_option("--out", a.out, "Report (.json)")->required();
  c.app->add_option("--sphere-size", a.sphere_size, "Rendered sphere size in pixels")->capture_default_str();
  c.app->add_option("--glossy-exponent", a.glossy, "Matte-silver lobe exponent")->capture_default_str();
  c.resolve = [&a] {
    a.names = hdr_names(a.pred_dir);
    const std::vector<std::string> gt = hdr_names(a.gt_dir);
    if (a.names.size() != gt.size())
      usage("prediction count " + std::to_string(a.names.size()) + " != ground-truth count " +
            std::to_string(gt.size()));
    if (a.names != gt) usage("prediction and ground-truth file names differ");
    if (a.names.empty()) usage("no .hdr files in " + a.pred_dir.string());
  };
  c.run = [&a, &root] {
    std::vector<pano::HdrPanorama> pred, gt;
    for (const auto& n : a.names) {
      pred.push_back(data::load_hdr(a.pred_dir / n));
      gt.push_back(data::load_hdr(a.gt_dir / n));
    }
    eval::EvalOptions opt;
    opt.render.image_size = a.sphere_size;
    opt.render.glossy_exponent = a.glossy;
    opt.names = a.names;
    const eval::MetricsReport report = eval::evaluate(pred, gt, opt);
    if (a.out.has_parent_path()) ensure_dir(a.out.parent_path());
    write_text(a.out, eval::to_json(report).dump(2));
    write_text(fs::path(a.out).replace_extension(".config.toml"), config_echo(root));
    std::cout << json{{"report", a.out.string()}, {"count", a.names.size()}}.dump() << std::endl;
  };
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App root{"HDR panorama lighting estimation and editing"};
  root.require_subcommand(1);
  root.set_config("--config", "", "TOML file; flags override its values");

  SynthArgs synth;
  TrainArgs train;
  SampleArgs sample;
  CropArgs crop;
  InvertArgs invert;
  EditArgs edit;
  EvalArgs evaluate;
  const std::vector<Command> commands{add_synth(root, synth),   add_train(root, train),
                                      add_sample(root, sample), add_crop(root, crop),
                                      add_invert(root, invert), add_edit(root, edit),
                                      add_eval(root, evaluate)};

  try {
    root.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return root.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return root.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error("invalid_argument", e.what());
    return 2;
  }

  for (const Command& c : commands) {
    if (!c.app->parsed()) continue;
    try {
      c.resolve();
    } catch (const Error& e) {
      print_error(to_string(e.code()), e.what());
      return 2;
    } catch (const std::exception& e) {
      print_error("invalid_argument", e.what());
      return 2;
    }
    try {
      c.run();
    } catch (const UsageError& e) {
      print_error(to_string(e.code()), e.what());
      return 2;
    } catch (const Error& e) {
      print_error(to_string(e.code()), e.what());
      return 1;
    } catch (const std::exception& e) {
      print_error("internal", e.what());
      return 1;
    }
    return 0;
  }
  return 2;
}
