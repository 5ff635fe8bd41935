#pragma once

#include <cmath>
#include <cstdint>
#include <span>

#include <Eigen/Dense>

#include "mergemix/tensor_store.hpp"

namespace mergemix {

/// One-hidden-layer ReLU network with a softmax head. Checkpoint tensors:
/// "w1" [hidden, input], "b1" [hidden], "w2" [classes, hidden], "b2" [classes].
template <typename Scalar>
struct Mlp {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  Matrix w1;
  Vector b1;
  Matrix w2;
  Vector b2;

  Eigen::Index input_dim() const { return w1.cols(); }
  Eigen::Index hidden_dim() const { return w1.rows(); }
  Eigen::Index num_classes() const { return w2.rows(); }

  static Mlp zeros(Eigen::Index input, Eigen::Index hidden, Eigen::Index classes) {
    return {Matrix::Zero(hidden, input), Vector::Zero(hidden), Matrix::Zero(classes, hidden),
            Vector::Zero(classes)};
  }

  static Mlp from_checkpoint(const Checkpoint& ckpt);
  Checkpoint to_checkpoint() const;

  template <typename OtherScalar>
  Mlp<OtherScalar> cast() const {
    return {w1.template cast<OtherScalar>(), b1.template cast<OtherScalar>(),
            w2.template cast<OtherScalar>(), b2.template cast<OtherScalar>()};
  }

  /// Hidden activations, one row per input row.
  template <typename Derived>
  Matrix hidden(const Eigen::MatrixBase<Derived>& x) const {
    Matrix pre = x.template cast<Scalar>() * w1.transpose();
    pre.rowwise() += b1.transpose();
    return pre.cwiseMax(Scalar(0));
  }

  template <typename Derived>
  Matrix logits(const Eigen::MatrixBase<Derived>& x) const {
    Matrix out = hidden(x) * w2.transpose();
    out.rowwise() += b2.transpose();
    return out;
  }

  Mlp& operator+=(const Mlp& o) {
    w1 += o.w1;
    b1 += o.b1;
    w2 += o.w2;
    b2 += o.b2;
    return *this;
  }
  Mlp& operator*=(Scalar s) {
    w1 *= s;
    b1 *= s;
    w2 *= s;
    b2 *= s;
    return *this;
  }
};

/// Per-row softmax cross-entropy, stabilized by subtracting the row max.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> cross_entropy(
    const Eigen::MatrixBase<Derived>& logits, std::span<const int> labels) {
  using Scalar = typename Derived::Scalar;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> out(logits.rows());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const Scalar m = logits.row(r).maxCoeff();
    const Scalar lse = m + std::log((logits.row(r).array() - m).exp().sum());
    out[r] = lse - logits(r, labels[r]);
  }
  return out;
}

/// Mean cross-entropy over a batch and its gradient with respect to every
/// parameter (accumulated into grad, which is overwritten).
template <typename Scalar, typename Derived>
Scalar loss_and_gradient(const Mlp<Scalar>& model, const Eigen::MatrixBase<Derived>& x,
                         std::span<const int> labels, Mlp<Scalar>& grad) {
  using Matrix = typename Mlp<Scalar>::Matrix;
  const Eigen::Index n = x.rows();
  const Matrix xs = x.template cast<Scalar>();
  Matrix pre = xs * model.w1.transpose();
  pre.rowwise() += model.b1.transpose();
  const Matrix h = pre.cwiseMax(Scalar(0));
  Matrix z = h * model.w2.transpose();
  z.rowwise() += model.b2.transpose();

  Scalar loss = 0;
  Matrix dz(z.rows(), z.cols());
  for (Eigen::Index r = 0; r < n; ++r) {
    const Scalar m = z.row(r).maxCoeff();
    auto e = (z.row(r).array() - m).exp();
    const Scalar s = e.sum();
    loss += m + std::log(s) - z(r, labels[r]);
    dz.row(r) = e / s;
    dz(r, labels[r]) -= Scalar(1);
  }
  const Scalar inv_n = Scalar(1) / static_cast<Scalar>(n);
  dz *= inv_n;

  grad.w2.noalias() = dz.transpose() * h;
  grad.b2 = dz.colwise().sum().transpose();
  Matrix dh = dz * model.w2;
  dh = dh.cwiseProduct((pre.array() > Scalar(0)).template cast<Scalar>().matrix());
  grad.w1.noalias() = dh.transpose() * xs;
  grad.b1 = dh.colwise().sum().transpose();
  return loss * inv_n;
}

/// Throws unless ckpt carries exactly the four MLP tensors with consistent shapes.
void check_mlp_schema(const Checkpoint& ckpt);

extern template struct Mlp<float>;
extern template struct Mlp<double>;

}  // namespace mergemix
