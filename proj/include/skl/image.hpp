#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "skl/error.hpp"

namespace skl {

/// Row-major H x W x C image, channel-interleaved. Intensities live in [0, 1]
/// after load and after every augmentation; normalize() is the only operation
/// that leaves that range.
template <typename Scalar>
class Image {
 public:
  using Storage = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

  Image() = default;
  Image(int height, int width, int channels, Scalar fill = Scalar(0))
      : height_(height), width_(width), channels_(channels) {
    if (height < 0 || width < 0 || channels < 1)
      fail(Errc::invalid_argument, "image dimensions must be non-negative with at least one channel");
    data_ = Storage::Constant(Eigen::Index(height) * width * channels, fill);
  }

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  int channels() const noexcept { return channels_; }
  Eigen::Index size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.size() == 0; }

  Scalar& operator()(int y, int x, int c) { return data_[index(y, x, c)]; }
  Scalar operator()(int y, int x, int c) const { return data_[index(y, x, c)]; }

  Storage& data() noexcept { return data_; }
  const Storage& data() const noexcept { return data_; }
  std::span<const Scalar> values() const noexcept { return {data_.data(), std::size_t(data_.size())}; }

  bool same_shape(const Image& other) const noexcept {
    return height_ == other.height_ && width_ == other.width_ && channels_ == other.channels_;
  }

  template <typename Other>
  Image<Other> cast() const {
    Image<Other> out(height_, width_, channels_);
    out.data() = data_.template cast<Other>();
    return out;
  }

  friend bool operator==(const Image& a, const Image& b) {
    return a.same_shape(b) && (a.data_ == b.data_).all();
  }

 private:
  Eigen::Index index(int y, int x, int c) const noexcept {
    return (Eigen::Index(y) * width_ + x) * channels_ + c;
  }

  int height_ = 0;
  int width_ = 0;
  int channels_ = 1;
  Storage data_;
};

using ImageTensor = Image<float>;

enum class ChannelPolicy {
  keep,  ///< whatever the file holds (1 or 3)
  gray,  ///< luma-reduce color sources
  rgb,   ///< promote grayscale to three identical channels
};

/// Decodes PNG or JPEG (sniffed from the magic bytes, not the extension).
/// Bytes map to intensities by division by 255.
ImageTensor load_image(const std::filesystem::path& path, ChannelPolicy policy = ChannelPolicy::keep);

/// Encodes by extension: .png (lossless) or .jpg/.jpeg (quality 95).
void save_image(const std::filesystem::path& path, const ImageTensor& img);

std::vector<std::uint8_t> encode_png(const ImageTensor& img);

inline std::uint8_t quantize(float v) noexcept {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

inline float dequantize(std::uint8_t b) noexcept { return static_cast<float>(b) / 255.0f; }

/// Snaps every intensity to the nearest 8-bit level.
ImageTensor quantized(const ImageTensor& img);

ImageTensor with_channels(const ImageTensor& img, int channels);

/// Bilinear resampling with the half-pixel (align-corners = false) convention;
/// source coordinates are clamped to the image border.
template <typename Scalar>
Image<Scalar> resize_bilinear(const Image<Scalar>& img, int out_h, int out_w, bool clamp_unit = true) {
  if (out_h < 1 || out_w < 1) fail(Errc::invalid_argument, "resize target must be at least 1x1");
  if (img.empty()) fail(Errc::invalid_argument, "cannot resize an empty image");
  const int in_h = img.height(), in_w = img.width(), ch = img.channels();
  Image<Scalar> out(out_h, out_w, ch);
  const double sy = double(in_h) / out_h, sx = double(in_w) / out_w;
  for (int y = 0; y < out_h; ++y) {
    double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, double(in_h - 1));
    int y0 = int(std::floor(fy));
    int y1 = std::min(y0 + 1, in_h - 1);
    double wy = fy - y0;
    for (int x = 0; x < out_w; ++x) {
      double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, double(in_w - 1));
      int x0 = int(std::floor(fx));
      int x1 = std::min(x0 + 1, in_w - 1);
      double wx = fx - x0;
      for (int c = 0; c < ch; ++c) {
        double top = (1 - wx) * img(y0, x0, c) + wx * img(y0, x1, c);
        double bot = (1 - wx) * img(y1, x0, c) + wx * img(y1, x1, c);
        double v = (1 - wy) * top + wy * bot;
        if (clamp_unit) v = std::clamp(v, 0.0, 1.0);
        out(y, x, c) = Scalar(v);
      }
    }
  }
  return out;
}

struct NormalizationSpec {
  std::vector<double> mean;
  std::vector<double> scale;

  /// Symmetric default mapping [0, 1] onto [-1, 1].
  static NormalizationSpec symmetric(int channels) {
    return {std::vector<double>(channels, 0.5), std::vector<double>(channels, 0.5)};
  }
  void validate(int channels) const;
};

template <typename Scalar>
Image<Scalar> normalize(const Image<Scalar>& img, const NormalizationSpec& spec) {
  spec.validate(img.channels());
  Image<Scalar> out = img;
  const int ch = img.channels();
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    int c = int(i % ch);
    out.data()[i] = Scalar((img.data()[i] - spec.mean[c]) / spec.scale[c]);
  }
  return out;
}

template <typename Scalar>
Image<Scalar> denormalize(const Image<Scalar>& img, const NormalizationSpec& spec) {
  spec.validate(img.channels());
  Image<Scalar> out = img;
  const int ch = img.channels();
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    int c = int(i % ch);
    out.data()[i] = Scalar(img.data()[i] * spec.scale[c] + spec.mean[c]);
  }
  return out;
}

}  // namespace skl
