#include "mergemix/merge.hpp"

#include <cmath>

#include "mergemix/error.hpp"

namespace mergemix {

ModelBank ModelBank::make(std::vector<Checkpoint> models, std::vector<std::string> names) {
  require(!models.empty(), "empty model bank");
  require(models.size() <= MixtureVector::kMaxSize, "model bank larger than 64 models");
  require(names.empty() || names.size() == models.size(),
          "model bank names do not match model count");
  ModelBank bank;
  bank.schema = validate_bank(models);
  if (names.empty()) {
    for (std::size_t i = 0; i < models.size(); ++i) names.push_back("dataset" + std::to_string(i));
  }
  bank.models = std::move(models);
  bank.names = std::move(names);
  return bank;
}

namespace {

void check_alpha(const ModelBank& bank, const MixtureVector& alpha) {
  require(alpha.size() == bank.size(), "mixture length " + std::to_string(alpha.size()) +
                                           " does not match bank size " +
                                           std::to_string(bank.size()));
  require(!alpha.empty(), "empty mixture");
}

Checkpoint with_schema_of(const ModelBank& bank) {
  Checkpoint out;
  for (const auto& [name, shape] : bank.schema) out.tensors.emplace(name, Tensor(shape));
  return out;
}

}  // namespace

Checkpoint merge_uniform(const ModelBank& bank, const MixtureVector& alpha) {
  check_alpha(bank, alpha);
  const auto selected = alpha.indices();
  const double k = static_cast<double>(selected.size());
  Checkpoint out = with_schema_of(bank);
  for (auto& [name, tensor] : out.tensors) {
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(tensor.numel());
    for (int i : selected) acc += bank.models[i].tensors.at(name).data.cast<double>();
    tensor.data = (acc / k).cast<float>();
  }
  return out;
}

Checkpoint merge_weighted(const ModelBank& bank, std::span<const double> weights) {
  require(static_cast<int>(weights.size()) == bank.size(),
          "weight count does not match bank size");
  double total = 0.0;
  std::uint64_t support = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    require(std::isfinite(weights[i]), "non-finite weight");
    require(weights[i] >= 0.0, "negative weight");
    total += weights[i];
    if (weights[i] > 0.0) support |= std::uint64_t{1} << i;
  }
  require(total > 0.0, "all-zero weights");

  // Equal weights on the support are exactly the uniform merge.
  bool equal = true;
  double first = -1.0;
  for (double w : weights) {
    if (w == 0.0) continue;
    if (first < 0.0) first = w;
    equal = equal && (w == first);
  }
  if (equal) return merge_uniform(bank, MixtureVector(bank.size(), support));

  Checkpoint out = with_schema_of(bank);
  for (auto& [name, tensor] : out.tensors) {
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(tensor.numel());
    for (std::size_t i = 0; i < weights.size(); ++i) {
      if (weights[i] == 0.0) continue;
      acc += (weights[i] / total) * bank.models[i].tensors.at(name).data.cast<double>();
    }
    tensor.data = acc.cast<float>();
  }
  return out;
}

std::vector<MixtureVector> gray_code_order(int n) {
  require(n >= 1 && n <= 30, "gray_code_order: n must be in [1, 30]");
  const std::uint64_t total = std::uint64_t{1} << n;
  std::vector<MixtureVector> out;
  out.reserve(total - 1);
  for (std::uint64_t k = 1; k < total; ++k) {
    const std::uint64_t g = k ^ (k >> 1);
    // Leading binary digit of g is dataset 0, i.e. mask bit i = bit (n-1-i) of g.
    std::uint64_t mask = 0;
    for (int i = 0; i < n; ++i)
      if ((g >> (n - 1 - i)) & 1u) mask |= std::uint64_t{1} << i;
    out.emplace_back(n, mask);
  }
  return out;
}

SubsetMerger::SubsetMerger(const ModelBank& bank, std::span<const MixtureVector> order)
    : bank_(bank), order_(order), merged_(with_schema_of(bank)) {
  Eigen::Index total = 0;
  for (const auto& [name, shape] : bank.schema) {
    offsets_.emplace_back(name, total);
    total += shape_numel(shape);
  }
  sum_ = Eigen::VectorXd::Zero(total);
}

void SubsetMerger::apply(int index, double sign) {
  const auto& model = bank_.models[index];
  for (const auto& [name, offset] : offsets_) {
    const auto& data = model.tensors.at(name).data;
    sum_.segment(offset, data.size()) += sign * data.cast<double>();
  }
}

void SubsetMerger::recompute(const MixtureVector& alpha) {
  sum_.setZero();
  for (int i : alpha.indices()) apply(i, 1.0);
  since_refresh_ = 0;
  ++full_recomputations_;
}

void SubsetMerger::emit() {
  const double k = current_.count();
  for (const auto& [name, offset] : offsets_) {
    auto& tensor = merged_.tensors.at(name);
    tensor.data = (sum_.segment(offset, tensor.numel()) / k).cast<float>();
  }
}

bool SubsetMerger::next() {
  if (pos_ >= order_.size()) return false;
  const MixtureVector& target = order_[pos_++];
  check_alpha(bank_, target);

  const std::uint64_t diff = has_sum_ ? (target.mask() ^ current_.mask()) : ~std::uint64_t{0};
  if (!has_sum_ || std::popcount(diff) > 1 || since_refresh_ >= kRefreshInterval) {
    recompute(target);
  } else if (diff != 0) {
    const int bit = std::countr_zero(diff);
    apply(bit, target.test(bit) ? 1.0 : -1.0);
  }
  current_ = target;
  has_sum_ = true;
  ++since_refresh_;
  emit();
  return true;
}

void subset_merges(const ModelBank& bank, std::span<const MixtureVector> order,
                   const std::function<void(const MixtureVector&, const Checkpoint&)>& sink) {
  SubsetMerger merger(bank, order);
  while (merger.next()) sink(merger.alpha(), merger.merged());
}

}  // namespace mergemix
