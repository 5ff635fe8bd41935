#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mergemix/mixture.hpp"
#include "mergemix/tensor_store.hpp"

namespace mergemix {

/// The N individually fine-tuned checkpoints. Model order defines the bit
/// positions of every MixtureVector used against the bank.
struct ModelBank {
  std::vector<Checkpoint> models;
  std::vector<std::string> names;
  TensorSchema schema;

  /// Validates the schema; empty names are replaced by "dataset<i>".
  static ModelBank make(std::vector<Checkpoint> models, std::vector<std::string> names = {});

  int size() const { return static_cast<int>(models.size()); }
};

/// Uniform average of the selected models, accumulated in double by
/// ascending dataset index and rounded to float once.
Checkpoint merge_uniform(const ModelBank& bank, const MixtureVector& alpha);

/// Convex combination with weights normalized to sum 1.
Checkpoint merge_weighted(const ModelBank& bank, std::span<const double> weights);

/// All 2^n - 1 non-empty mixtures in binary-reflected Gray-code order:
/// entry k is g(k) = k ^ (k >> 1) written as an n-digit binary numeral
/// whose leading digit is dataset 0. Requires 1 <= n <= 30.
std::vector<MixtureVector> gray_code_order(int n);

/// Streams merge_uniform outputs for a sequence of mixtures, keeping a
/// running double-precision parameter sum that is patched by one model per
/// single-bit transition. Multi-bit jumps and every kRefreshInterval
/// emissions trigger a full recomputation.
class SubsetMerger {
 public:
  static constexpr std::int64_t kRefreshInterval = std::int64_t{1} << 12;

  SubsetMerger(const ModelBank& bank, std::span<const MixtureVector> order);

  /// Advances to the next mixture; false once the order is exhausted.
  bool next();

  const MixtureVector& alpha() const { return current_; }
  const Checkpoint& merged() const { return merged_; }

  std::int64_t full_recomputations() const { return full_recomputations_; }

 private:
  void recompute(const MixtureVector& alpha);
  void apply(int index, double sign);
  void emit();

  const ModelBank& bank_;
  std::span<const MixtureVector> order_;
  std::size_t pos_ = 0;
  MixtureVector current_;
  bool has_sum_ = false;
  std::int64_t since_refresh_ = 0;
  std::int64_t full_recomputations_ = 0;
  std::vector<std::pair<std::string, Eigen::Index>> offsets_;
  Eigen::VectorXd sum_;
  Checkpoint merged_;
};

/// Callback form of SubsetMerger.
void subset_merges(const ModelBank& bank, std::span<const MixtureVector> order,
                   const std::function<void(const MixtureVector&, const Checkpoint&)>& sink);

}  // namespace mergemix
