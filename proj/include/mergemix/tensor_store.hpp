#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace mergemix {

using Shape = std::vector<std::int64_t>;

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Dense float32 tensor, flat row-major storage.
struct Tensor {
  Shape shape;
  Eigen::VectorXf data;

  Tensor() = default;
  Tensor(Shape s, Eigen::VectorXf d);
  explicit Tensor(Shape s);  // zero-filled

  std::int64_t numel() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }

  /// View of a rank-2 tensor as a row-major matrix.
  Eigen::Map<const RowMatrix<float>> matrix() const;
  Eigen::Map<RowMatrix<float>> matrix();

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape == b.shape && a.data.size() == b.data.size() &&
           (a.data.array() == b.data.array()).all();
  }
};

std::int64_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Named tensors plus optional string metadata. std::map keeps names unique
/// and iteration lexicographic, which is also the on-disk order.
struct Checkpoint {
  std::map<std::string, Tensor> tensors;
  std::map<std::string, std::string> metadata;

  const Tensor& at(const std::string& name) const;
  Tensor& at(const std::string& name);

  /// Total element count across all tensors.
  std::int64_t parameter_count() const;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

/// Tensor names and shapes shared by every checkpoint of a bank.
using TensorSchema = std::map<std::string, Shape>;

TensorSchema schema_of(const Checkpoint& ckpt);

struct EmbeddingSet {
  Tensor embeddings;  // [num_samples, dim]
  std::string source_name;

  std::int64_t num_samples() const { return embeddings.shape.at(0); }
  std::int64_t dim() const { return embeddings.shape.at(1); }
  Eigen::Map<const RowMatrix<float>> rows() const { return embeddings.matrix(); }
};

EmbeddingSet make_embedding_set(RowMatrix<float> rows, std::string source_name);

/// Checks shape/size invariants and that every value is finite.
void check_tensor(const std::string& name, const Tensor& t, bool require_finite);

/// Serializes to the container layout: u64 LE header length, JSON header,
/// packed little-endian float32 data region.
std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::string_view bytes);

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Returns the common schema or throws naming the first mismatch.
TensorSchema validate_bank(std::span<const Checkpoint> ckpts);

inline constexpr const char* kEmbeddingTensorName = "embeddings";

void write_embeddings(const EmbeddingSet& set, const std::filesystem::path& path);
EmbeddingSet read_embeddings(const std::filesystem::path& path);

}  // namespace mergemix
