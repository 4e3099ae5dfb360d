#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

namespace panolight {

/// One named, shape-tagged float32 tensor.
struct ArchiveTensor {
  std::vector<std::int64_t> shape;
  std::vector<float> values;

  std::int64_t element_count() const;
};

/// Versioned binary container of named float32 tensors plus a JSON
/// metadata block. Layout (all integers little-endian):
///
///   magic "PLTA" | u32 version | u64 meta_len | meta (UTF-8 JSON)
///   u32 tensor_count | per tensor:
///     u16 name_len | name | u8 ndim | i64 dims[ndim] | f32 values[prod(dims)]
///
/// Tensors are stored in name order so the byte stream is a pure function of
/// the contents.
class TensorArchive {
 public:
  static constexpr std::uint32_t kVersion = 1;

  nlohmann::json& metadata() { return metadata_; }
  const nlohmann::json& metadata() const { return metadata_; }

  void put(const std::string& name, std::vector<std::int64_t> shape, std::vector<float> values);
  bool contains(const std::string& name) const { return tensors_.count(name) != 0; }
  const ArchiveTensor& get(const std::string& name) const;
  const std::map<std::string, ArchiveTensor>& tensors() const { return tensors_; }

  void save(const std::filesystem::path& path) const;
  static TensorArchive load(const std::filesystem::path& path);

 private:
  nlohmann::json metadata_ = nlohmann::json::object();
  std::map<std::string, ArchiveTensor> tensors_;
};

}  // namespace panolight
