#pragma once

#include <cstdint>

#include <Eigen/Core>

#include "panolight/core/error.hpp"

namespace panolight {

/// Planar image: `channels` planes of height x width, each plane row-major.
/// The planar layout matches the NCHW tensors used by the networks, so a
/// single-sample tensor and an Image share the same memory order.
template <typename Scalar>
class Image {
 public:
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  using PlaneArray = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using PlaneMap = Eigen::Map<PlaneArray>;
  using ConstPlaneMap = Eigen::Map<const PlaneArray>;

  Image() = default;
  Image(int height, int width, int channels = 3, Scalar fill = Scalar(0))
      : height_(height), width_(width), channels_(channels) {
    require(height >= 0 && width >= 0 && channels >= 0, Errc::invalid_argument,
            "image dimensions must be nonnegative");
    data_.setConstant(Eigen::Index(height) * width * channels, fill);
  }

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  Eigen::Index pixel_count() const { return Eigen::Index(height_) * width_; }
  Eigen::Index size() const { return data_.size(); }
  bool empty() const { return data_.size() == 0; }

  Scalar& operator()(int c, int y, int x) { return data_[index(c, y, x)]; }
  Scalar operator()(int c, int y, int x) const { return data_[index(c, y, x)]; }

  PlaneMap plane(int c) { return PlaneMap(data_.data() + c * pixel_count(), height_, width_); }
  ConstPlaneMap plane(int c) const {
    return ConstPlaneMap(data_.data() + c * pixel_count(), height_, width_);
  }

  Array& array() { return data_; }
  const Array& array() const { return data_; }
  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }

  bool same_shape(const Image& other) const {
    return height_ == other.height_ && width_ == other.width_ && channels_ == other.channels_;
  }

  template <typename Other>
  Image<Other> cast() const {
    Image<Other> out(height_, width_, channels_);
    out.array() = data_.template cast<Other>();
    return out;
  }

  bool operator==(const Image& other) const {
    return same_shape(other) && (data_ == other.data_).all();
  }

 private:
  Eigen::Index index(int c, int y, int x) const {
    return (Eigen::Index(c) * height_ + y) * width_ + x;
  }

  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  Array data_;
};

using ImageF = Image<float>;
using ImageD = Image<double>;

/// Binary per-pixel mask, row-major H x W.
using Mask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

}  // namespace panolight
