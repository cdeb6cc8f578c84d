#include "skl/model/loss.hpp"

#include <cmath>

namespace skl {

template <typename Scalar>
Matrix<Scalar> softmax(const Matrix<Scalar>& logits) {
  Matrix<Scalar> p = logits.colwise() - logits.rowwise().maxCoeff();
  p = p.array().exp().matrix();
  p.array().colwise() /= p.rowwise().sum().array();
  return p;
}

template <typename Scalar>
LossResult<Scalar> softmax_cross_entropy(const Matrix<Scalar>& logits, std::span<const int> labels) {
  const Eigen::Index n = logits.rows(), k = logits.cols();
  if (Eigen::Index(labels.size()) != n)
    fail(Errc::shape_mismatch, std::to_string(labels.size()) + " labels for " + std::to_string(n) + " rows");
  if (n == 0) fail(Errc::invalid_argument, "empty batch");

  LossResult<Scalar> out;
  const Matrix<Scalar> shifted = logits.colwise() - logits.rowwise().maxCoeff();
  const auto log_z = shifted.array().exp().rowwise().sum().log().eval();
  out.probabilities = (shifted.array().colwise() - log_z).exp().matrix();
  out.dlogits = out.probabilities;
  double total = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const int y = labels[std::size_t(i)];
    if (y < 0 || y >= k)
      fail(Errc::out_of_range, "label " + std::to_string(y) + " outside [0, " + std::to_string(k) + ")");
    total += double(log_z(i)) - double(shifted(i, y));
    out.dlogits(i, y) -= Scalar(1);
  }
  out.dlogits /= Scalar(n);
  out.loss = Scalar(total / double(n));
  return out;
}

template Matrix<float> softmax(const Matrix<float>&);
template Matrix<double> softmax(const Matrix<double>&);
template LossResult<float> softmax_cross_entropy(const Matrix<float>&, std::span<const int>);
template LossResult<double> softmax_cross_entropy(const Matrix<double>&, std::span<const int>);

}  // namespace skl
