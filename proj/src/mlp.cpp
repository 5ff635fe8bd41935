#include "mergemix/mlp.hpp"

#include "mergemix/error.hpp"

namespace mergemix {

void check_mlp_schema(const Checkpoint& ckpt) {
  require(ckpt.tensors.size() == 4 && ckpt.tensors.contains("w1") && ckpt.tensors.contains("b1") &&
              ckpt.tensors.contains("w2") && ckpt.tensors.contains("b2"),
          "checkpoint does not match the MLP schema {w1, b1, w2, b2}");
  const auto& w1 = ckpt.at("w1").shape;
  const auto& b1 = ckpt.at("b1").shape;
  const auto& w2 = ckpt.at("w2").shape;
  const auto& b2 = ckpt.at("b2").shape;
  require(w1.size() == 2 && b1.size() == 1 && w2.size() == 2 && b2.size() == 1,
          "MLP tensors have the wrong rank");
  require(b1[0] == w1[0] && w2[1] == w1[0] && b2[0] == w2[0], "MLP tensor shapes are inconsistent");
}

template <typename Scalar>
Mlp<Scalar> Mlp<Scalar>::from_checkpoint(const Checkpoint& ckpt) {
  check_mlp_schema(ckpt);
  Mlp m;
  m.w1 = ckpt.at("w1").matrix().template cast<Scalar>();
  m.b1 = ckpt.at("b1").data.template cast<Scalar>();
  m.w2 = ckpt.at("w2").matrix().template cast<Scalar>();
  m.b2 = ckpt.at("b2").data.template cast<Scalar>();
  return m;
}

namespace {

template <typename Derived>
Tensor matrix_tensor(const Eigen::MatrixBase<Derived>& m) {
  RowMatrix<float> rm = m.template cast<float>();
  return Tensor({rm.rows(), rm.cols()}, Eigen::Map<const Eigen::VectorXf>(rm.data(), rm.size()));
}

template <typename Derived>
Tensor vector_tensor(const Eigen::MatrixBase<Derived>& v) {
  return Tensor({v.size()}, v.template cast<float>());
}

}  // namespace

template <typename Scalar>
Checkpoint Mlp<Scalar>::to_checkpoint() const {
  Checkpoint ckpt;
  ckpt.tensors.emplace("w1", matrix_tensor(w1));
  ckpt.tensors.emplace("b1", vector_tensor(b1));
  ckpt.tensors.emplace("w2", matrix_tensor(w2));
  ckpt.tensors.emplace("b2", vector_tensor(b2));
  return ckpt;
}

template struct Mlp<float>;
template struct Mlp<double>;

}  // namespace mergemix
