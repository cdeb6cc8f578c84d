#pragma once

#include <Eigen/Core>

#include <memory>
#include <span>
#include <string_view>
#include <vector>

#include "skl/error.hpp"
#include "skl/image.hpp"
#include "skl/model/config.hpp"

namespace skl {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

/// Batch of feature maps stored as a (batch * height * width) x channels
/// matrix. Row (n * height + y) * width + x holds pixel (y, x) of image n, so
/// each channel plane is one contiguous column.
template <typename Scalar>
struct FeatureMap {
  int batch = 0;
  int height = 0;
  int width = 0;
  Matrix<Scalar> data;

  FeatureMap() = default;
  FeatureMap(int n, int h, int w, int channels)
      : batch(n), height(h), width(w), data(Matrix<Scalar>::Zero(Eigen::Index(n) * h * w, channels)) {}

  int channels() const noexcept { return int(data.cols()); }
  Eigen::Index pixels_per_image() const noexcept { return Eigen::Index(height) * width; }
  Eigen::Index row(int n, int y, int x) const noexcept { return (Eigen::Index(n) * height + y) * width + x; }
  Scalar& at(int n, int y, int x, int c) { return data(row(n, y, x), c); }
  Scalar at(int n, int y, int x, int c) const { return data(row(n, y, x), c); }

  template <typename Other>
  FeatureMap<Other> cast() const {
    FeatureMap<Other> out;
    out.batch = batch;
    out.height = height;
    out.width = width;
    out.data = data.template cast<Other>();
    return out;
  }
};

/// Packs images (already normalized, or raw) into one batch.
template <typename Scalar>
FeatureMap<Scalar> to_feature_map(std::span<const ImageTensor> images) {
  if (images.empty()) fail(Errc::invalid_argument, "empty batch");
  const auto& first = images.front();
  FeatureMap<Scalar> fm(int(images.size()), first.height(), first.width(), first.channels());
  for (std::size_t n = 0; n < images.size(); ++n) {
    const auto& img = images[n];
    if (!img.same_shape(first)) fail(Errc::shape_mismatch, "batch images differ in shape");
    for (int y = 0; y < img.height(); ++y)
      for (int x = 0; x < img.width(); ++x)
        for (int c = 0; c < img.channels(); ++c) fm.at(int(n), y, x, c) = Scalar(img(y, x, c));
  }
  return fm;
}

/// Named tensors aligned with enumerate_parameters(); used for parameters,
/// gradients and momentum buffers alike.
template <typename Scalar>
class TensorSet {
 public:
  TensorSet() = default;
  explicit TensorSet(std::shared_ptr<const std::vector<ParamInfo>> info) : info_(std::move(info)) {
    values_.reserve(info_->size());
    for (const auto& p : *info_) values_.push_back(Matrix<Scalar>::Zero(p.rows, p.cols));
  }

  std::size_t size() const noexcept { return values_.size(); }
  const ParamInfo& info(std::size_t i) const { return (*info_)[i]; }
  const std::vector<ParamInfo>& infos() const { return *info_; }
  const std::shared_ptr<const std::vector<ParamInfo>>& info_ptr() const noexcept { return info_; }

  Matrix<Scalar>& operator[](std::size_t i) { return values_[i]; }
  const Matrix<Scalar>& operator[](std::size_t i) const { return values_[i]; }

  std::size_t index_of(std::string_view name) const {
    for (std::size_t i = 0; i < info_->size(); ++i)
      if ((*info_)[i].name == name) return i;
    fail(Errc::invalid_argument, "no tensor named " + std::string(name));
  }
  Matrix<Scalar>& operator[](std::string_view name) { return values_[index_of(name)]; }
  const Matrix<Scalar>& operator[](std::string_view name) const { return values_[index_of(name)]; }

  void set_zero() {
    for (auto& v : values_) v.setZero();
  }

  TensorSet zeros_like() const { return TensorSet(info_); }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& v : values_) n += std::size_t(v.size());
    return n;
  }

 private:
  std::shared_ptr<const std::vector<ParamInfo>> info_;
  std::vector<Matrix<Scalar>> values_;
};

}  // namespace skl
