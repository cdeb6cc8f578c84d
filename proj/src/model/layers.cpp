#include "skl/model/layers.hpp"

#include <cmath>
#include <limits>

namespace skl {

template <typename Scalar>
Matrix<Scalar> im2col(const FeatureMap<Scalar>& in, const ConvGeometry& g) {
  const int k = g.kernel, s = g.stride, p = g.pad();
  const int oh = g.out_size(in.height), ow = g.out_size(in.width);
  const int channels = in.channels();
  Matrix<Scalar> cols(Eigen::Index(in.batch) * oh * ow, Eigen::Index(channels) * k * k);
  for (int c = 0; c < channels; ++c) {
    const Scalar* plane = in.data.col(c).data();
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        Scalar* dst = cols.col((Eigen::Index(c) * k + ky) * k + kx).data();
        for (int n = 0; n < in.batch; ++n)
          for (int oy = 0; oy < oh; ++oy) {
            const int iy = oy * s - p + ky;
            Scalar* row = dst + (Eigen::Index(n) * oh + oy) * ow;
            if (iy < 0 || iy >= in.height) {
              std::fill(row, row + ow, Scalar(0));
              continue;
            }
            const Scalar* src = plane + (Eigen::Index(n) * in.height + iy) * in.width;
            for (int ox = 0; ox < ow; ++ox) {
              const int ix = ox * s - p + kx;
              row[ox] = (ix < 0 || ix >= in.width) ? Scalar(0) : src[ix];
            }
          }
      }
  }
  return cols;
}

template <typename Scalar>
void col2im(const Matrix<Scalar>& cols, const ConvGeometry& g, FeatureMap<Scalar>& din) {
  const int k = g.kernel, s = g.stride, p = g.pad();
  const int oh = g.out_size(din.height), ow = g.out_size(din.width);
  for (int c = 0; c < din.channels(); ++c) {
    Scalar* plane = din.data.col(c).data();
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        const Scalar* src = cols.col((Eigen::Index(c) * k + ky) * k + kx).data();
        for (int n = 0; n < din.batch; ++n)
          for (int oy = 0; oy < oh; ++oy) {
            const int iy = oy * s - p + ky;
            if (iy < 0 || iy >= din.height) continue;
            const Scalar* row = src + (Eigen::Index(n) * oh + oy) * ow;
            Scalar* dst = plane + (Eigen::Index(n) * din.height + iy) * din.width;
            for (int ox = 0; ox < ow; ++ox) {
              const int ix = ox * s - p + kx;
              if (ix >= 0 && ix < din.width) dst[ix] += row[ox];
            }
          }
      }
  }
}

namespace {

bool is_pointwise(const ConvGeometry& g) { return g.kernel == 1 && g.stride == 1; }

}  // namespace

template <typename Scalar>
FeatureMap<Scalar> conv_forward(const FeatureMap<Scalar>& in, const Matrix<Scalar>& weight, const ConvGeometry& g) {
  if (weight.cols() != Eigen::Index(in.channels()) * g.kernel * g.kernel)
    fail(Errc::shape_mismatch, "conv weight expects " + std::to_string(weight.cols() / (g.kernel * g.kernel)) +
                                   " input channels, got " + std::to_string(in.channels()));
  FeatureMap<Scalar> out;
  out.batch = in.batch;
  out.height = g.out_size(in.height);
  out.width = g.out_size(in.width);
  if (is_pointwise(g))
    out.data.noalias() = in.data * weight.transpose();
  else
    out.data.noalias() = im2col(in, g) * weight.transpose();
  return out;
}

template <typename Scalar>
Matrix<Scalar> conv_backward(const FeatureMap<Scalar>& in, const Matrix<Scalar>& weight, const FeatureMap<Scalar>& dout,
                             const ConvGeometry& g, FeatureMap<Scalar>* din) {
  Matrix<Scalar> dweight;
  if (is_pointwise(g)) {
    dweight.noalias() = dout.data.transpose() * in.data;
    if (din) {
      *din = FeatureMap<Scalar>{};
      din->batch = in.batch;
      din->height = in.height;
      din->width = in.width;
      din->data.noalias() = dout.data * weight;
    }
    return dweight;
  }
  const Matrix<Scalar> cols = im2col(in, g);
  dweight.noalias() = dout.data.transpose() * cols;
  if (din) {
    Matrix<Scalar> dcols;
    dcols.noalias() = dout.data * weight;
    *din = FeatureMap<Scalar>(in.batch, in.height, in.width, in.channels());
    col2im(dcols, g, *din);
  }
  return dweight;
}

template <typename Scalar>
FeatureMap<Scalar> bn_forward(const FeatureMap<Scalar>& x, const Eigen::Ref<const Vector<Scalar>>& gamma,
                              const Eigen::Ref<const Vector<Scalar>>& beta, Eigen::Ref<Vector<Scalar>> running_mean,
                              Eigen::Ref<Vector<Scalar>> running_var, BnMode mode, bool update,
                              const BnSettings& settings, BnCache<Scalar>& cache) {
  const Eigen::Index m = x.data.rows();
  const Eigen::Index channels = x.data.cols();
  if (gamma.size() != channels) fail(Errc::shape_mismatch, "batch-norm channel count mismatch");
  cache.mode = mode;
  RowVector<Scalar> mean;
  if (mode == BnMode::batch_stats) {
    mean = x.data.colwise().mean();
    cache.xhat = x.data.rowwise() - mean;
    RowVector<Scalar> var = cache.xhat.array().square().colwise().sum() / Scalar(m);
    cache.inv_std = (var.array() + Scalar(settings.eps)).rsqrt().transpose();
    if (update) {
      const Scalar mom = Scalar(settings.momentum);
      const Scalar unbias = m > 1 ? Scalar(m) / Scalar(m - 1) : Scalar(1);
      running_mean = (Scalar(1) - mom) * running_mean + mom * mean.transpose();
      running_var = (Scalar(1) - mom) * running_var + mom * unbias * var.transpose();
    }
  } else {
    cache.xhat = x.data.rowwise() - running_mean.transpose();
    cache.inv_std = (running_var.array() + Scalar(settings.eps)).rsqrt();
  }
  cache.xhat = cache.xhat * cache.inv_std.asDiagonal();
  FeatureMap<Scalar> y;
  y.batch = x.batch;
  y.height = x.height;
  y.width = x.width;
  y.data = (cache.xhat * gamma.asDiagonal()).rowwise() + beta.transpose();
  return y;
}

template <typename Scalar>
FeatureMap<Scalar> bn_backward(const FeatureMap<Scalar>& dy, const Eigen::Ref<const Vector<Scalar>>& gamma, const BnCache<Scalar>& cache,
                               Vector<Scalar>& dgamma, Vector<Scalar>& dbeta) {
  dbeta = dy.data.colwise().sum().transpose();
  dgamma = dy.data.cwiseProduct(cache.xhat).colwise().sum().transpose();
  FeatureMap<Scalar> dx;
  dx.batch = dy.batch;
  dx.height = dy.height;
  dx.width = dy.width;
  const Vector<Scalar> scale = gamma.cwiseProduct(cache.inv_std);
  if (cache.mode == BnMode::running_stats) {
    dx.data = dy.data * scale.asDiagonal();
    return dx;
  }
  // dx = scale / m * (m * dy - sum(dy) - xhat * sum(dy * xhat))
  const Scalar m = Scalar(dy.data.rows());
  const RowVector<Scalar> mean_dy = dbeta.transpose() / m;
  const RowVector<Scalar> mean_dy_xhat = dgamma.transpose() / m;
  dx.data = ((dy.data.rowwise() - mean_dy) - cache.xhat * mean_dy_xhat.asDiagonal()) * scale.asDiagonal();
  return dx;
}

template <typename Scalar>
FeatureMap<Scalar> maxpool_forward(const FeatureMap<Scalar>& in, std::vector<Eigen::Index>& argmax) {
  const ConvGeometry g{3, 2};
  FeatureMap<Scalar> out(in.batch, g.out_size(in.height), g.out_size(in.width), in.channels());
  argmax.assign(std::size_t(out.data.size()), -1);
  for (int c = 0; c < in.channels(); ++c)
    for (int n = 0; n < in.batch; ++n)
      for (int oy = 0; oy < out.height; ++oy)
        for (int ox = 0; ox < out.width; ++ox) {
          Scalar best = -std::numeric_limits<Scalar>::infinity();
          Eigen::Index best_row = -1;
          for (int ky = 0; ky < 3; ++ky)
            for (int kx = 0; kx < 3; ++kx) {
              const int iy = oy * 2 - 1 + ky, ix = ox * 2 - 1 + kx;
              if (iy < 0 || iy >= in.height || ix < 0 || ix >= in.width) continue;
              const Eigen::Index r = in.row(n, iy, ix);
              if (in.data(r, c) > best) {
                best = in.data(r, c);
                best_row = r;
              }
            }
          const Eigen::Index orow = out.row(n, oy, ox);
          out.data(orow, c) = best;
          argmax[std::size_t(Eigen::Index(c) * out.data.rows() + orow)] = best_row;
        }
  return out;
}

template <typename Scalar>
FeatureMap<Scalar> maxpool_backward(const FeatureMap<Scalar>& dout, const std::vector<Eigen::Index>& argmax,
                                    const FeatureMap<Scalar>& in_shape) {
  FeatureMap<Scalar> din(in_shape.batch, in_shape.height, in_shape.width, in_shape.channels());
  for (Eigen::Index c = 0; c < dout.data.cols(); ++c)
    for (Eigen::Index r = 0; r < dout.data.rows(); ++r)
      din.data(argmax[std::size_t(c * dout.data.rows() + r)], c) += dout.data(r, c);
  return din;
}

template <typename Scalar>
Matrix<Scalar> gap_forward(const FeatureMap<Scalar>& in) {
  const Eigen::Index hw = in.pixels_per_image();
  Matrix<Scalar> pooled(in.batch, in.channels());
  for (int n = 0; n < in.batch; ++n) pooled.row(n) = in.data.middleRows(n * hw, hw).colwise().mean();
  return pooled;
}

template <typename Scalar>
FeatureMap<Scalar> gap_backward(const Matrix<Scalar>& dpooled, int height, int width) {
  FeatureMap<Scalar> din(int(dpooled.rows()), height, width, int(dpooled.cols()));
  const Eigen::Index hw = din.pixels_per_image();
  for (Eigen::Index n = 0; n < dpooled.rows(); ++n)
    din.data.middleRows(n * hw, hw).rowwise() = dpooled.row(n) / Scalar(hw);
  return din;
}

#define SKL_INSTANTIATE_LAYERS(S)                                                                                    \
  template Matrix<S> im2col(const FeatureMap<S>&, const ConvGeometry&);                                              \
  template void col2im(const Matrix<S>&, const ConvGeometry&, FeatureMap<S>&);                                      \
  template FeatureMap<S> conv_forward(const FeatureMap<S>&, const Matrix<S>&, const ConvGeometry&);                 \
  template Matrix<S> conv_backward(const FeatureMap<S>&, const Matrix<S>&, const FeatureMap<S>&, const ConvGeometry&, \
                                   FeatureMap<S>*);                                                                  \
  template FeatureMap<S> bn_forward(const FeatureMap<S>&, const Eigen::Ref<const Vector<S>>&,                   \
                                    const Eigen::Ref<const Vector<S>>&, Eigen::Ref<Vector<S>>, Eigen::Ref<Vector<S>>,  \
                                    BnMode, bool, const BnSettings&, BnCache<S>&);                                   \
  template FeatureMap<S> bn_backward(const FeatureMap<S>&, const Eigen::Ref<const Vector<S>>&, const BnCache<S>&,     \
                                     Vector<S>&,                                                                    \
                                     Vector<S>&);                                                                    \
  template FeatureMap<S> maxpool_forward(const FeatureMap<S>&, std::vector<Eigen::Index>&);                         \
  template FeatureMap<S> maxpool_backward(const FeatureMap<S>&, const std::vector<Eigen::Index>&,                    \
                                          const FeatureMap<S>&);                                                     \
  template Matrix<S> gap_forward(const FeatureMap<S>&);                                                              \
  template FeatureMap<S> gap_backward(const Matrix<S>&, int, int);

SKL_INSTANTIATE_LAYERS(float)
SKL_INSTANTIATE_LAYERS(double)

}  // namespace skl
