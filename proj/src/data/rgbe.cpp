#include "panolight/data/rgbe.hpp"

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

namespace panolight::data {
namespace {

using Rgbe = std::array<std::uint8_t, 4>;

Rgbe float_to_rgbe(float r, float g, float b) {
  const float v = std::max({r, g, b});
  if (v < 1e-32f) return {0, 0, 0, 0};
  int e = 0;
  const float scale = std::frexp(v, &e) * 256.f / v;
  return {std::uint8_t(r * scale), std::uint8_t(g * scale), std::uint8_t(b * scale),
          std::uint8_t(e + 128)};
}

void rgbe_to_float(const std::uint8_t* px, float& r, float& g, float& b) {
  if (px[3] == 0) {
    r = g = b = 0.f;
    return;
  }
  const float f = std::ldexp(1.f, int(px[3]) - (128 + 8));
  r = (px[0] + 0.5f) * f;
  g = (px[1] + 0.5f) * f;
  b = (px[2] + 0.5f) * f;
}

class ByteReader {
 public:
  explicit ByteReader(std::vector<std::uint8_t> bytes) : bytes_(std::move(bytes)) {}

  bool at_end() const { return pos_ >= bytes_.size(); }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  std::uint8_t peek(std::size_t offset = 0) const { return bytes_[pos_ + offset]; }

  std::uint8_t next() {
    if (at_end()) fail(Errc::truncated_scanline, "truncated scanline");
    return bytes_[pos_++];
  }

  // Returns false at end of data.
  bool line(std::string& out) {
    if (at_end()) return false;
    out.clear();
    while (!at_end()) {
      const char c = char(bytes_[pos_++]);
      if (c == '\n') return true;
      out.push_back(c);
    }
    return true;
  }

 private:
  std::vector<std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

void read_flat_scanline(ByteReader& in, std::vector<Rgbe>& line) {
  int shift = 0;
  std::size_t i = 0;
  while (i < line.size()) {
    Rgbe px{in.next(), in.next(), in.next(), in.next()};
    if (px[0] == 1 && px[1] == 1 && px[2] == 1) {
      // Old-style run: repeat the previous pixel.
      if (i == 0) fail(Errc::malformed_scanline, "run-length repeat at start of scanline");
      const std::size_t count = std::size_t(px[3]) << shift;
      if (i + count > line.size()) fail(Errc::malformed_scanline, "run-length overflow");
      for (std::size_t k = 0; k < count; ++k, ++i) line[i] = line[i - 1];
      shift += 8;
    } else {
      line[i++] = px;
      shift = 0;
    }
  }
}

void read_rle_scanline(ByteReader& in, std::vector<Rgbe>& line) {
  const int width = int(line.size());
  in.next();
  in.next();
  const int encoded_width = (int(in.next()) << 8) | int(in.next());
  if (encoded_width != width) fail(Errc::malformed_scanline, "scanline width mismatch");
  for (int c = 0; c < 4; ++c) {
    int x = 0;
    while (x < width) {
      int count = in.next();
      if (count > 128) {
        count -= 128;
        if (x + count > width) fail(Errc::malformed_scanline, "run overflows scanline");
        const std::uint8_t value = in.next();
        for (int k = 0; k < count; ++k) line[std::size_t(x++)][std::size_t(c)] = value;
      } else {
        if (count == 0 || x + count > width)
          fail(Errc::malformed_scanline, "bad literal count in scanline");
        for (int k = 0; k < count; ++k) line[std::size_t(x++)][std::size_t(c)] = in.next();
      }
    }
  }
}

void write_rle_channel(std::ostream& out, const std::vector<std::uint8_t>& data) {
  constexpr std::size_t kMinRun = 4;
  std::size_t cur = 0;
  const std::size_t n = data.size();
  while (cur < n) {
    // Find the next run of at least kMinRun identical bytes.
    std::size_t beg_run = cur;
    std::size_t run = 0;
    while (run < kMinRun && beg_run < n) {
      beg_run += run;
      run = 1;
      while (beg_run + run < n && run < 127 && data[beg_run + run] == data[beg_run]) ++run;
    }
    // A short run right before the long one is cheaper as a run too.
    if (beg_run - cur > 1 && beg_run - cur < kMinRun) {
      std::size_t k = cur + 1;
      while (k < beg_run && data[k] == data[cur]) ++k;
      if (k == beg_run) {
        out.put(char(128 + beg_run - cur));
        out.put(char(data[cur]));
        cur = beg_run;
      }
    }
    while (cur < beg_run) {
      const std::size_t literal = std::min<std::size_t>(128, beg_run - cur);
      out.put(char(literal));
      out.write(reinterpret_cast<const char*>(&data[cur]), std::streamsize(literal));
      cur += literal;
    }
    if (run >= kMinRun) {
      out.put(char(128 + run));
      out.put(char(data[beg_run]));
      cur += run;
    }
  }
}

}  // namespace

ImageF read_rgbe(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) fail(Errc::io_error, "cannot open " + path.string());
  ByteReader in(std::vector<std::uint8_t>(std::istreambuf_iterator<char>(file), {}));

  std::string line;
  if (!in.line(line) || line.rfind("#?", 0) != 0)
    fail(Errc::malformed_header, "missing #? signature");
  bool header_done = false;
  while (in.line(line)) {
    if (line.empty()) {
      header_done = true;
      break;
    }
    if (line.rfind("FORMAT=", 0) == 0) {
      const std::string format = line.substr(7);
      if (format != "32-bit_rle_rgbe")
        fail(Errc::unsupported_format, "unsupported pixel format " + format);
    }
  }
  if (!header_done) fail(Errc::malformed_header, "header not terminated by a blank line");
  if (!in.line(line)) fail(Errc::malformed_header, "missing resolution line");

  std::istringstream res(line);
  std::string ya, xa;
  long long height = -1, width = -1;
  if (!(res >> ya >> height >> xa >> width) || height <= 0 || width <= 0)
    fail(Errc::malformed_header, "bad resolution line '" + line + "'");
  if (ya != "-Y" || xa != "+X")
    fail(Errc::unsupported_format, "unsupported scan orientation '" + line + "'");
  if (height > 65536 || width > 65536)
    fail(Errc::malformed_header, "resolution too large");

  ImageF img(int(height), int(width), 3);
  std::vector<Rgbe> scan(static_cast<std::size_t>(width));
  for (int y = 0; y < height; ++y) {
    if (in.remaining() < 4) fail(Errc::truncated_scanline, "truncated scanline");
    const bool rle = width >= 8 && width < 32768 && in.peek(0) == 2 && in.peek(1) == 2 &&
                     (in.peek(2) & 0x80) == 0;
    if (rle)
      read_rle_scanline(in, scan);
    else
      read_flat_scanline(in, scan);
    for (int x = 0; x < width; ++x)
      rgbe_to_float(scan[std::size_t(x)].data(), img(0, y, x), img(1, y, x), img(2, y, x));
  }
  return img;
}

void write_rgbe(const ImageF& image, const std::filesystem::path& path) {
  require(image.channels() == 3, Errc::shape_mismatch, "write_rgbe: need 3 channels");
  require(image.array().allFinite() && (image.array() >= 0.f).all(), Errc::invalid_argument,
          "write_rgbe: pixels must be finite and nonnegative");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(Errc::io_error, "cannot open for writing: " + path.string());
  const int h = image.height();
  const int w = image.width();
  out << "#?RADIANCE\nFORMAT=32-bit_rle_rgbe\n\n-Y " << h << " +X " << w << "\n";

  const bool rle = w >= 8 && w < 32768;
  std::vector<std::uint8_t> channel(std::size_t(w) * 4);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const Rgbe px = float_to_rgbe(image(0, y, x), image(1, y, x), image(2, y, x));
      for (int c = 0; c < 4; ++c) channel[std::size_t(c * w + x)] = px[std::size_t(c)];
    }
    if (!rle) {
      for (int x = 0; x < w; ++x)
        for (int c = 0; c < 4; ++c) out.put(char(channel[std::size_t(c * w + x)]));
      continue;
    }
    out.put(2);
    out.put(2);
    out.put(char(w >> 8));
    out.put(char(w & 0xFF));
    for (int c = 0; c < 4; ++c)
      write_rle_channel(out, std::vector<std::uint8_t>(channel.begin() + c * w,
                                                       channel.begin() + (c + 1) * w));
  }
  if (!out) fail(Errc::io_error, "write failed: " + path.string());
}

pano::HdrPanorama load_hdr(const std::filesystem::path& path) {
  return pano::HdrPanorama(read_rgbe(path));
}

void save_hdr(const pano::HdrPanorama& pano, const std::filesystem::path& path) {
  write_rgbe(pano.pixels(), path);
}

void write_ppm(const ImageF& image, const std::filesystem::path& path) {
  require(image.channels() == 3, Errc::shape_mismatch, "write_ppm: need 3 channels");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(Errc::io_error, "cannot open for writing: " + path.string());
  out << "P6\n" << image.width() << " " << image.height() << "\n255\n";
  for (int y = 0; y < image.height(); ++y)
    for (int x = 0; x < image.width(); ++x)
      for (int c = 0; c < 3; ++c)
        out.put(char(std::lround(std::clamp(image(c, y, x), 0.f, 1.f) * 255.f)));
  if (!out) fail(Errc::io_error, "write failed: " + path.string());
}

ImageF read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::io_error, "cannot open " + path.string());
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  if (magic != "P6" || w <= 0 || h <= 0 || maxval != 255)
    fail(Errc::unsupported_format, "only 8-bit binary PPM (P6) is supported");
  in.get();
  ImageF img(h, w, 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        const int byte = in.get();
        if (byte == EOF) fail(Errc::truncated_scanline, "truncated PPM data");
        img(c, y, x) = float(byte) / 255.f;
      }
  return img;
}

}  // namespace panolight::data
