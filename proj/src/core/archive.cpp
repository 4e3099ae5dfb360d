#include "panolight/core/archive.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "panolight/core/error.hpp"

namespace panolight {
namespace {

static_assert(std::endian::native == std::endian::little,
              "archive I/O assumes a little-endian host");

constexpr char kMagic[4] = {'P', 'L', 'T', 'A'};

template <typename T>
void write_pod(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in, const std::filesystem::path& path) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) fail(Errc::archive_format, "truncated archive: " + path.string());
  return value;
}

}  // namespace

std::int64_t ArchiveTensor::element_count() const {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

void TensorArchive::put(const std::string& name, std::vector<std::int64_t> shape,
                        std::vector<float> values) {
  require(!name.empty() && name.size() < 65536, Errc::invalid_argument, "bad tensor name");
  ArchiveTensor t{std::move(shape), std::move(values)};
  require(t.element_count() == std::int64_t(t.values.size()), Errc::shape_mismatch,
          "tensor '" + name + "' shape does not match value count");
  tensors_[name] = std::move(t);
}

const ArchiveTensor& TensorArchive::get(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) fail(Errc::archive_format, "archive has no tensor '" + name + "'");
  return it->second;
}

void TensorArchive::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(Errc::io_error, "cannot open for writing: " + path.string());
  out.write(kMagic, 4);
  write_pod<std::uint32_t>(out, kVersion);
  const std::string meta = metadata_.dump();
  write_pod<std::uint64_t>(out, meta.size());
  out.write(meta.data(), std::streamsize(meta.size()));
  write_pod<std::uint32_t>(out, std::uint32_t(tensors_.size()));
  for (const auto& [name, t] : tensors_) {
    write_pod<std::uint16_t>(out, std::uint16_t(name.size()));
    out.write(name.data(), std::streamsize(name.size()));
    write_pod<std::uint8_t>(out, std::uint8_t(t.shape.size()));
    for (auto d : t.shape) write_pod<std::int64_t>(out, d);
    out.write(reinterpret_cast<const char*>(t.values.data()),
              std::streamsize(t.values.size() * sizeof(float)));
  }
  if (!out) fail(Errc::io_error, "write failed: " + path.string());
}

TensorArchive TensorArchive::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::io_error, "cannot open archive: " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    fail(Errc::archive_format, "not a tensor archive: " + path.string());
  const auto version = read_pod<std::uint32_t>(in, path);
  if (version != kVersion)
    fail(Errc::archive_format, "unsupported archive version " + std::to_string(version));

  TensorArchive archive;
  const auto meta_len = read_pod<std::uint64_t>(in, path);
  std::string meta(meta_len, '\0');
  in.read(meta.data(), std::streamsize(meta_len));
  if (!in) fail(Errc::archive_format, "truncated archive metadata: " + path.string());
  try {
    archive.metadata_ = nlohmann::json::parse(meta);
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::archive_format, std::string("bad archive metadata: ") + e.what());
  }

  const auto count = read_pod<std::uint32_t>(in, path);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = read_pod<std::uint16_t>(in, path);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    ArchiveTensor t;
    const auto ndim = read_pod<std::uint8_t>(in, path);
    for (int d = 0; d < ndim; ++d) {
      const auto dim = read_pod<std::int64_t>(in, path);
      if (dim < 0) fail(Errc::archive_format, "negative dimension in '" + name + "'");
      t.shape.push_back(dim);
    }
    t.values.resize(std::size_t(t.element_count()));
    in.read(reinterpret_cast<char*>(t.values.data()),
            std::streamsize(t.values.size() * sizeof(float)));
    if (!in) fail(Errc::archive_format, "truncated tensor '" + name + "'");
    archive.tensors_[name] = std::move(t);
  }
  return archive;
}

}  // namespace panolight
