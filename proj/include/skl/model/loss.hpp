#pragma once

#include <span>

#include "skl/model/tensor.hpp"

namespace skl {

/// Row-wise softmax with max subtraction.
template <typename Scalar>
Matrix<Scalar> softmax(const Matrix<Scalar>& logits);

template <typename Scalar>
struct LossResult {
  Scalar loss = 0;
  Matrix<Scalar> dlogits;        ///< (softmax - onehot) / batch
  Matrix<Scalar> probabilities;
};

/// Mean cross entropy over the batch.
template <typename Scalar>
LossResult<Scalar> softmax_cross_entropy(const Matrix<Scalar>& logits, std::span<const int> labels);

}  // namespace skl
