#include "panolight/gan/checkpoint.hpp"

namespace panolight::gan {

using nn::Tensor;

ModelCheckpoint::ModelCheckpoint(const GeneratorConfig& gcfg, const TrainConfig& tcfg,
                                 const pano::ToneMapParams& tm, std::uint64_t seed)
    : generator_config(gcfg),
      train_config(tcfg),
      tone_map(tm),
      generator(gcfg, derive_seed(seed, 1)),
      generator_ema(gcfg, derive_seed(seed, 1)),
      disc_hdr(gcfg, derive_seed(seed, 2)),
      disc_ldr(gcfg, derive_seed(seed, 3)) {
  tone_map.validate();
  train_config.validate();
}

ModelCheckpoint ModelCheckpoint::clone() const {
  ModelCheckpoint out(generator_config, train_config, tone_map, 0);
  out.step = step;
  out.pl_mean = pl_mean;
  out.generator.params().copy_from(generator.params());
  out.generator.w_avg = generator.w_avg;
  out.generator_ema.params().copy_from(generator_ema.params());
  out.generator_ema.w_avg = generator_ema.w_avg;
  out.disc_hdr.params().copy_from(disc_hdr.params());
  out.disc_ldr.params().copy_from(disc_ldr.params());
  out.optimizer_moments = optimizer_moments;
  out.optimizer_steps = optimizer_steps;
  return out;
}

void put_tensor(TensorArchive& archive, const std::string& name, const Tensor<float>& t) {
  archive.put(name, {t.shape[0], t.shape[1], t.shape[2], t.shape[3]},
              std::vector<float>(t.data.data(), t.data.data() + t.data.size()));
}

Tensor<float> get_tensor(const TensorArchive& archive, const std::string& name) {
  if (!archive.contains(name)) fail(Errc::archive_format, "archive is missing tensor '" + name + "'");
  const ArchiveTensor& a = archive.get(name);
  if (a.shape.size() != 4) fail(Errc::archive_format, "tensor '" + name + "' is not 4-D");
  Tensor<float> t({int(a.shape[0]), int(a.shape[1]), int(a.shape[2]), int(a.shape[3])});
  t.data = Eigen::Map<const Eigen::ArrayXf>(a.values.data(), Eigen::Index(a.values.size()));
  return t;
}

namespace {

void put_params(TensorArchive& archive, const std::string& prefix, const ParamSet<float>& params) {
  for (const auto& [name, v] : params.items()) put_tensor(archive, prefix + name, v.value());
}

void get_params(const TensorArchive& archive, const std::string& prefix, ParamSet<float>& params) {
  for (const auto& [name, v] : params.items()) {
    Tensor<float> t = get_tensor(archive, prefix + name);
    if (t.shape != v.shape())
      fail(Errc::archive_format, "tensor '" + prefix + name + "' has shape " + nn::to_string(t.shape) +
                                     ", expected " + nn::to_string(v.shape()));
    nn::Var<float> var = v;
    var.mutable_value() = std::move(t);
  }
}

constexpr const char* kFormat = "panolight-checkpoint";
constexpr int kCheckpointVersion = 1;

}  // namespace

void save_checkpoint(const ModelCheckpoint& ckpt, const std::filesystem::path& path) {
  TensorArchive archive;
  nlohmann::json& meta = archive.metadata();
  meta["format"] = kFormat;
  meta["version"] = kCheckpointVersion;
  meta["generator"] = ckpt.generator_config;
  meta["train"] = ckpt.train_config;
  meta["tone_map"] = {{"alpha", ckpt.tone_map.alpha}, {"gamma", ckpt.tone_map.gamma}};
  meta["step"] = ckpt.step;
  meta["pl_mean"] = ckpt.pl_mean;
  meta["optimizer_steps"] = ckpt.optimizer_steps;
  put_params(archive, "G.", ckpt.generator.params());
  put_params(archive, "G_ema.", ckpt.generator_ema.params());
  put_params(archive, "D.", ckpt.disc_hdr.params());
  put_params(archive, "Dp.", ckpt.disc_ldr.params());
  put_tensor(archive, "G.w_avg", ckpt.generator.w_avg);
  put_tensor(archive, "G_ema.w_avg", ckpt.generator_ema.w_avg);
  for (const auto& [name, t] : ckpt.optimizer_moments) put_tensor(archive, "opt." + name, t);
  archive.save(path);
}

ModelCheckpoint load_checkpoint(const std::filesystem::path& path) {
  const TensorArchive archive = TensorArchive::load(path);
  const nlohmann::json& meta = archive.metadata();
  if (meta.value("format", "") != kFormat)
    fail(Errc::archive_format, path.string() + " is not a model checkpoint");
  if (meta.value("version", 0) != kCheckpointVersion)
    fail(Errc::archive_format, "unsupported checkpoint version in " + path.string());
  try {
    const pano::ToneMapParams tm{meta.at("tone_map").at("alpha").get<double>(),
                                 meta.at("tone_map").at("gamma").get<double>()};
    ModelCheckpoint ckpt(meta.at("generator").get<GeneratorConfig>(),
                         meta.at("train").get<TrainConfig>(), tm, 0);
    ckpt.step = meta.at("step").get<long long>();
    ckpt.pl_mean = meta.at("pl_mean").get<double>();
    ckpt.optimizer_steps = meta.at("optimizer_steps").get<std::map<std::string, long long>>();
    get_params(archive, "G.", ckpt.generator.params());
    get_params(archive, "G_ema.", ckpt.generator_ema.params());
    get_params(archive, "D.", ckpt.disc_hdr.params());
    get_params(archive, "Dp.", ckpt.disc_ldr.params());
    ckpt.generator.w_avg = get_tensor(archive, "G.w_avg");
    ckpt.generator_ema.w_avg = get_tensor(archive, "G_ema.w_avg");
    for (const auto& [name, t] : archive.tensors())
      if (name.rfind("opt.", 0) == 0) ckpt.optimizer_moments[name.substr(4)] = get_tensor(archive, name);
    return ckpt;
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::archive_format, "bad checkpoint metadata in " + path.string() + ": " + e.what());
  }
}

}  // namespace panolight::gan
