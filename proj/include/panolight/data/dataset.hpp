#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "panolight/core/image.hpp"
#include "panolight/pano/panorama.hpp"
#include "panolight/pano/projection.hpp"
#include "panolight/pano/tonemap.hpp"

namespace panolight::data {

enum class Split { train, test };
const char* to_string(Split s);

struct ManifestEntry {
  std::string path;  // relative to the manifest directory
  Split split = Split::train;
  double alpha_used = 0.5;

  bool operator==(const ManifestEntry&) const = default;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  int height = 64;
  int width = 128;
  pano::ToneMapParams tone_map;
  /// Archive with the tone-mapped training tensors, relative to the manifest.
  std::string train_tensors;

  std::size_t count(Split s) const;
  void validate() const;
  bool operator==(const DatasetManifest&) const = default;
};

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);
DatasetManifest load_manifest(const std::filesystem::path& path);

struct SyntheticSource {
  int count = 10;
  std::uint64_t seed = 0;
};

struct PrepareOptions {
  /// Either a directory of .hdr panoramas or a synthetic corpus description.
  std::optional<std::filesystem::path> source_dir;
  std::optional<SyntheticSource> synthetic;
  std::filesystem::path out_dir;
  int height = 64;
  int width = 128;
  double split_ratio = 0.8;
  std::uint64_t seed = 0;
  double gamma = 2.4;
  /// Used when every training pixel is zero (degenerate median).
  double alpha_floor = 1.0;
};

/// Resizes every source panorama (area averaging), assigns a seeded
/// train/test split, computes one global alpha over all training pixels, and
/// writes panos/*.hdr, train_tonemapped.plta and manifest.json into out_dir.
DatasetManifest prepare_dataset(const PrepareOptions& options);

/// Loads the linear panoramas listed in a manifest for one split.
std::vector<pano::HdrPanorama> load_split(const DatasetManifest& manifest,
                                          const std::filesystem::path& manifest_dir, Split s);

struct TestPair {
  ImageF crop;  // LDR, [0,1]
  pano::HdrPanorama ground_truth;
};

/// crop = clamp(tonemap(perspective sample of pano), 0, 1).
TestPair make_test_pair(const pano::HdrPanorama& pano, const pano::CameraSpec& cam,
                        const pano::ToneMapParams& p);

}  // namespace panolight::data
