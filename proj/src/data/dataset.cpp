#include "panolight/data/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "panolight/core/archive.hpp"
#include "panolight/core/rng.hpp"
#include "panolight/data/rgbe.hpp"
#include "panolight/data/synth.hpp"

namespace panolight::data {
namespace fs = std::filesystem;
using nlohmann::json;

const char* to_string(Split s) { return s == Split::train ? "train" : "test"; }

std::size_t DatasetManifest::count(Split s) const {
  return std::size_t(std::count_if(entries.begin(), entries.end(),
                                   [s](const ManifestEntry& e) { return e.split == s; }));
}

void DatasetManifest::validate() const {
  require(height >= 1 && width == 2 * height, Errc::shape_mismatch, "manifest resolution must be W = 2H");
  tone_map.validate();
  std::vector<std::string> paths;
  for (const auto& e : entries) paths.push_back(e.path);
  std::sort(paths.begin(), paths.end());
  require(std::adjacent_find(paths.begin(), paths.end()) == paths.end(), Errc::invalid_argument,
          "manifest lists a panorama twice (splits must be disjoint)");
}

void save_manifest(const DatasetManifest& m, const fs::path& path) {
  json entries = json::array();
  for (const auto& e : m.entries)
    entries.push_back({{"path", e.path}, {"split", to_string(e.split)}, {"alpha_used", e.alpha_used}});
  const json j = {{"version", 1},
                  {"resolution", {m.height, m.width}},
                  {"tone_map", {{"alpha", m.tone_map.alpha}, {"gamma", m.tone_map.gamma}}},
                  {"train_tensors", m.train_tensors},
                  {"entries", entries}};
  std::ofstream out(path);
  if (!out) fail(Errc::io_error, "cannot write manifest " + path.string());
  out << j.dump(2) << "\n";
}

DatasetManifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::io_error, "cannot open manifest " + path.string());
  DatasetManifest m;
  try {
    const json j = json::parse(in);
    m.height = j.at("resolution").at(0).get<int>();
    m.width = j.at("resolution").at(1).get<int>();
    m.tone_map.alpha = j.at("tone_map").at("alpha").get<double>();
    m.tone_map.gamma = j.at("tone_map").at("gamma").get<double>();
    m.train_tensors = j.value("train_tensors", std::string());
    for (const auto& e : j.at("entries")) {
      const std::string split = e.at("split").get<std::string>();
      require(split == "train" || split == "test", Errc::invalid_argument,
              "manifest split must be train or test");
      m.entries.push_back({e.at("path").get<std::string>(),
                           split == "train" ? Split::train : Split::test,
                           e.at("alpha_used").get<double>()});
    }
  } catch (const json::exception& e) {
    fail(Errc::invalid_argument, std::string("malformed manifest: ") + e.what());
  }
  m.validate();
  return m;
}

namespace {

std::vector<fs::path> list_hdr_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) fail(Errc::empty_source, "source is not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".hdr") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  return files;
}

void put_stack(TensorArchive& archive, const std::string& name, const std::vector<ImageF>& images,
               int h, int w) {
  std::vector<float> values;
  values.reserve(images.size() * std::size_t(3 * h * w));
  for (const auto& img : images) values.insert(values.end(), img.data(), img.data() + img.size());
  archive.put(name, {std::int64_t(images.size()), 3, h, w}, std::move(values));
}

}  // namespace

DatasetManifest prepare_dataset(const PrepareOptions& opt) {
  require(opt.height >= 1 && opt.width == 2 * opt.height, Errc::shape_mismatch,
          "dataset resolution must be W = 2H");
  require(opt.split_ratio > 0 && opt.split_ratio < 1, Errc::invalid_argument,
          "split_ratio must be in (0, 1)");
  require(opt.source_dir.has_value() != opt.synthetic.has_value(), Errc::invalid_argument,
          "exactly one of source_dir / synthetic must be given");

  std::vector<ImageF> panos;
  if (opt.source_dir) {
    for (const auto& f : list_hdr_files(*opt.source_dir))
      panos.push_back(resize_area(load_hdr(f).pixels(), opt.height, opt.width));
  } else {
    require(opt.synthetic->count >= 0, Errc::invalid_argument, "synthetic count must be >= 0");
    for (int i = 0; i < opt.synthetic->count; ++i) {
      const SceneSpec scene = random_scene(derive_seed(opt.synthetic->seed, std::uint64_t(i)));
      panos.push_back(synth_pano(scene, opt.height, opt.width).pano.pixels());
    }
  }
  if (panos.size() < 2) fail(Errc::empty_source, "dataset source needs at least 2 panoramas");

  const std::size_t n = panos.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(opt.seed, 0x5b117));
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t n_train =
      std::clamp<std::size_t>(std::size_t(std::llround(opt.split_ratio * double(n))), 1, n - 1);
  std::vector<Split> split(n, Split::test);
  for (std::size_t k = 0; k < n_train; ++k) split[order[k]] = Split::train;

  // Global alpha over the gamma-compressed training pixels, so the median
  // training value lands at 0.5 after tone mapping.
  pano::ToneMapParams tm{1.0, opt.gamma};
  std::vector<float> population;
  for (std::size_t i = 0; i < n; ++i) {
    if (split[i] != Split::train) continue;
    const auto compressed = panos[i].array().pow(float(1.0 / opt.gamma)).eval();
    population.insert(population.end(), compressed.data(), compressed.data() + compressed.size());
  }
  try {
    tm.alpha = pano::compute_alpha(population);
  } catch (const Error& e) {
    if (e.code() != Errc::degenerate_median) throw;
    tm.alpha = opt.alpha_floor;
  }

  fs::create_directories(opt.out_dir / "panos");
  DatasetManifest manifest;
  manifest.height = opt.height;
  manifest.width = opt.width;
  manifest.tone_map = tm;
  manifest.train_tensors = "train_tonemapped.plta";
  std::vector<ImageF> train_tm, test_tm;
  for (std::size_t i = 0; i < n; ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "panos/%05zu.hdr", i);
    write_rgbe(panos[i], opt.out_dir / name);
    manifest.entries.push_back({name, split[i], tm.alpha});
    (split[i] == Split::train ? train_tm : test_tm).push_back(pano::tonemap(panos[i], tm));
  }

  TensorArchive archive;
  archive.metadata() = {{"alpha", tm.alpha}, {"gamma", tm.gamma}, {"domain", "tonemapped"}};
  put_stack(archive, "train", train_tm, opt.height, opt.width);
  put_stack(archive, "test", test_tm, opt.height, opt.width);
  archive.save(opt.out_dir / manifest.train_tensors);
  save_manifest(manifest, opt.out_dir / "manifest.json");
  return manifest;
}

std::vector<pano::HdrPanorama> load_split(const DatasetManifest& manifest, const fs::path& dir,
                                          Split s) {
  std::vector<pano::HdrPanorama> out;
  for (const auto& e : manifest.entries) {
    if (e.split != s) continue;
    ImageF img = read_rgbe(dir / e.path);
    require(img.height() == manifest.height && img.width() == manifest.width,
            Errc::shape_mismatch, "manifest entry resolution mismatch: " + e.path);
    out.emplace_back(std::move(img));
  }
  return out;
}

TestPair make_test_pair(const pano::HdrPanorama& pano, const pano::CameraSpec& cam,
                        const pano::ToneMapParams& p) {
  ImageF crop = pano::tonemap(pano::crop_from_pano(pano.pixels(), cam), p);
  crop.array() = crop.array().min(1.f);
  return {std::move(crop), pano};
}

}  // namespace panolight::data
