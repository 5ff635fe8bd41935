#pragma once

#include <cmath>
#include <limits>
#include <map>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "mergemix/error.hpp"
#include "mergemix/evaluator.hpp"
#include "mergemix/mixture.hpp"
#include "mergemix/tensor_store.hpp"

namespace mergemix {

enum class SimilarityKind { avg_max_cos, avg_min_l2, avg_avg_cos, avg_avg_l2, max_max_cos, min_min_l2 };

inline constexpr SimilarityKind kAllSimilarityKinds[] = {
    SimilarityKind::avg_max_cos, SimilarityKind::avg_min_l2, SimilarityKind::avg_avg_cos,
    SimilarityKind::avg_avg_l2,  SimilarityKind::max_max_cos, SimilarityKind::min_min_l2};

enum class Direction { maximize, minimize };

struct SimilarityMetric {
  SimilarityKind kind = SimilarityKind::avg_max_cos;

  bool is_cosine() const {
    return kind == SimilarityKind::avg_max_cos || kind == SimilarityKind::avg_avg_cos ||
           kind == SimilarityKind::max_max_cos;
  }
  Direction direction() const { return is_cosine() ? Direction::maximize : Direction::minimize; }
  /// True when score a is strictly better than b for this metric.
  bool better(double a, double b) const {
    return direction() == Direction::maximize ? a > b : a < b;
  }
};

std::string_view to_string(SimilarityKind k);
SimilarityKind parse_similarity_kind(std::string_view s);

/// Score between a target embedding set and a pooled mixture set, rows are
/// samples. Cosine kinds reject zero-norm rows.
template <typename DerivedT, typename DerivedS>
double similarity_score(const Eigen::MatrixBase<DerivedT>& target,
                        const Eigen::MatrixBase<DerivedS>& mixture, SimilarityKind kind) {
  require(target.rows() >= 1 && mixture.rows() >= 1, "similarity: empty embedding set");
  require(target.cols() == mixture.cols(), "similarity: embedding dimension mismatch");
  const Eigen::MatrixXd t = target.template cast<double>();
  const Eigen::MatrixXd s = mixture.template cast<double>();
  const SimilarityMetric metric{kind};

  Eigen::MatrixXd pair(t.rows(), s.rows());
  if (metric.is_cosine()) {
    const Eigen::VectorXd tn = t.rowwise().norm();
    const Eigen::VectorXd sn = s.rowwise().norm();
    require((tn.array() > 0.0).all() && (sn.array() > 0.0).all(),
            "similarity: zero-norm embedding row under a cosine metric");
    pair = (tn.asDiagonal().inverse() * t) * (sn.asDiagonal().inverse() * s).transpose();
  } else {
    for (Eigen::Index i = 0; i < t.rows(); ++i)
      pair.row(i) = (s.rowwise() - t.row(i)).rowwise().norm().transpose();
  }

  switch (kind) {
    case SimilarityKind::avg_max_cos: return pair.rowwise().maxCoeff().mean();
    case SimilarityKind::avg_min_l2: return pair.rowwise().minCoeff().mean();
    case SimilarityKind::avg_avg_cos:
    case SimilarityKind::avg_avg_l2: return pair.rowwise().mean().mean();
    case SimilarityKind::max_max_cos: return pair.maxCoeff();
    case SimilarityKind::min_min_l2: return pair.minCoeff();
  }
  return std::numeric_limits<double>::quiet_NaN();
}

double similarity_score(const EmbeddingSet& target, const EmbeddingSet& mixture,
                        SimilarityMetric metric);

/// Scores every mixture in order against the pooled (concatenated)
/// embeddings of its selected datasets.
std::vector<double> similarity_scores(const EmbeddingSet& target,
                                      std::span<const EmbeddingSet> per_dataset,
                                      std::span<const MixtureVector> order, SimilarityMetric metric);

/// Best mixture over all 2^N - 1 candidates under the metric's direction,
/// ties broken like mixture search.
std::pair<MixtureVector, double> similarity_select(const EmbeddingSet& target,
                                                   std::span<const EmbeddingSet> per_dataset,
                                                   SimilarityMetric metric);

/// Mean accuracy over a score table. With require_complete the table must
/// hold every non-empty mixture of one size; otherwise the entries are
/// treated as a Monte Carlo sample.
double random_selection_mean(const std::map<MixtureVector, Score, MixtureLess>& scores,
                             bool require_complete = true);

MixtureVector all_datasets_vector(int n);

}  // namespace mergemix
