#pragma once

#include <vector>

#include "skl/model/tensor.hpp"

namespace skl {

/// Square convolution with "same"-style padding kernel / 2.
struct ConvGeometry {
  int kernel = 3;
  int stride = 1;
  int pad() const noexcept { return kernel / 2; }
  int out_size(int in) const noexcept { return (in + 2 * pad() - kernel) / stride + 1; }
};

/// Patch matrix: one row per output pixel, one column per (channel, ky, kx).
template <typename Scalar>
Matrix<Scalar> im2col(const FeatureMap<Scalar>& in, const ConvGeometry& g);

/// Scatter-adds patch gradients back onto an input-shaped map.
template <typename Scalar>
void col2im(const Matrix<Scalar>& cols, const ConvGeometry& g, FeatureMap<Scalar>& din);

/// weight is (out, in * k * k) in (out, in, ky, kx) order.
template <typename Scalar>
FeatureMap<Scalar> conv_forward(const FeatureMap<Scalar>& in, const Matrix<Scalar>& weight, const ConvGeometry& g);

/// Returns dL/dweight; writes dL/din when `din` is non-null.
template <typename Scalar>
Matrix<Scalar> conv_backward(const FeatureMap<Scalar>& in, const Matrix<Scalar>& weight, const FeatureMap<Scalar>& dout,
                             const ConvGeometry& g, FeatureMap<Scalar>* din);

enum class BnMode { batch_stats, running_stats };

struct BnSettings {
  double momentum = 0.1;
  double eps = 1e-5;
};

template <typename Scalar>
struct BnCache {
  Matrix<Scalar> xhat;
  Vector<Scalar> inv_std;
  BnMode mode = BnMode::batch_stats;
};

/// Batch normalization over all pixels of the batch, per channel. In
/// batch_stats mode the running statistics are blended in when `update` is
/// set (unbiased variance, momentum from settings).
template <typename Scalar>
FeatureMap<Scalar> bn_forward(const FeatureMap<Scalar>& x, const Eigen::Ref<const Vector<Scalar>>& gamma,
                              const Eigen::Ref<const Vector<Scalar>>& beta, Eigen::Ref<Vector<Scalar>> running_mean,
                              Eigen::Ref<Vector<Scalar>> running_var, BnMode mode, bool update,
                              const BnSettings& settings, BnCache<Scalar>& cache);

template <typename Scalar>
FeatureMap<Scalar> bn_backward(const FeatureMap<Scalar>& dy, const Eigen::Ref<const Vector<Scalar>>& gamma, const BnCache<Scalar>& cache,
                               Vector<Scalar>& dgamma, Vector<Scalar>& dbeta);

template <typename Scalar>
void relu_inplace(FeatureMap<Scalar>& x) {
  x.data = x.data.cwiseMax(Scalar(0));
}

/// Zeroes dy wherever the rectified output was not positive.
template <typename Scalar>
void relu_backward_inplace(FeatureMap<Scalar>& dy, const FeatureMap<Scalar>& out) {
  dy.data = (out.data.array() > Scalar(0)).select(dy.data, Scalar(0));
}

/// 3x3 stride-2 max pool with padding 1; `argmax` records the winning input row.
template <typename Scalar>
FeatureMap<Scalar> maxpool_forward(const FeatureMap<Scalar>& in, std::vector<Eigen::Index>& argmax);

template <typename Scalar>
FeatureMap<Scalar> maxpool_backward(const FeatureMap<Scalar>& dout, const std::vector<Eigen::Index>& argmax,
                                    const FeatureMap<Scalar>& in_shape);

/// Global average pool: batch x channels.
template <typename Scalar>
Matrix<Scalar> gap_forward(const FeatureMap<Scalar>& in);

template <typename Scalar>
FeatureMap<Scalar> gap_backward(const Matrix<Scalar>& dpooled, int height, int width);

}  // namespace skl
