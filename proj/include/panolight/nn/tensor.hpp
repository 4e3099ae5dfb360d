#pragma once

#include <array>
#include <random>
#include <string>

#include <Eigen/Core>

#include "panolight/core/error.hpp"
#include "panolight/core/image.hpp"
#include "panolight/core/rng.hpp"

namespace panolight::nn {

/// NCHW extents. Vectors are stored as [N, C, 1, 1].
using Shape = std::array<int, 4>;

inline Eigen::Index numel(const Shape& s) {
  return Eigen::Index(s[0]) * s[1] * s[2] * s[3];
}

std::string to_string(const Shape& s);

/// Dense NCHW tensor backed by a contiguous Eigen array.
template <typename Scalar>
struct Tensor {
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

  Shape shape{0, 0, 0, 0};
  Array data;

  Tensor() = default;
  explicit Tensor(const Shape& s, Scalar fill = Scalar(0)) : shape(s) {
    require(s[0] >= 0 && s[1] >= 0 && s[2] >= 0 && s[3] >= 0, Errc::invalid_argument,
            "tensor extents must be nonnegative");
    data.setConstant(numel(s), fill);
  }
  Tensor(const Shape& s, Array values) : shape(s), data(std::move(values)) {
    require(data.size() == numel(s), Errc::shape_mismatch,
            "tensor data does not match shape " + to_string(s));
  }

  static Tensor randn(const Shape& s, Rng& rng) {
    Tensor t(s);
    std::normal_distribution<double> nd(0.0, 1.0);
    for (Eigen::Index i = 0; i < t.data.size(); ++i) t.data[i] = Scalar(nd(rng));
    return t;
  }

  int n() const { return shape[0]; }
  int c() const { return shape[1]; }
  int h() const { return shape[2]; }
  int w() const { return shape[3]; }
  Eigen::Index size() const { return data.size(); }
  Eigen::Index plane_size() const { return Eigen::Index(shape[2]) * shape[3]; }

  Scalar& at(int n_, int c_, int y, int x) { return data[index(n_, c_, y, x)]; }
  Scalar at(int n_, int c_, int y, int x) const { return data[index(n_, c_, y, x)]; }
  Eigen::Index index(int n_, int c_, int y, int x) const {
    return ((Eigen::Index(n_) * shape[1] + c_) * shape[2] + y) * shape[3] + x;
  }

  Scalar* sample(int n_) { return data.data() + Eigen::Index(n_) * shape[1] * plane_size(); }
  const Scalar* sample(int n_) const {
    return data.data() + Eigen::Index(n_) * shape[1] * plane_size();
  }

  template <typename Other>
  Tensor<Other> cast() const {
    return Tensor<Other>(shape, data.template cast<Other>());
  }

  bool operator==(const Tensor& o) const { return shape == o.shape && (data == o.data).all(); }
};

/// Copies sample `n` of an [N, C, H, W] tensor into a C-channel image.
template <typename Scalar>
Image<Scalar> to_image(const Tensor<Scalar>& t, int n = 0) {
  Image<Scalar> img(t.h(), t.w(), t.c());
  img.array() = Eigen::Map<const typename Tensor<Scalar>::Array>(t.sample(n), img.size());
  return img;
}

/// Wraps an image as a [1, C, H, W] tensor.
template <typename Scalar>
Tensor<Scalar> from_image(const Image<Scalar>& img) {
  return Tensor<Scalar>({1, img.channels(), img.height(), img.width()}, img.array());
}

}  // namespace panolight::nn
