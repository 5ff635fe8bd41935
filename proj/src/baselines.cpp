#include "mergemix/baselines.hpp"

#include "mergemix/merge.hpp"

namespace mergemix {

std::string_view to_string(SimilarityKind k) {
  switch (k) {
    case SimilarityKind::avg_max_cos: return "avg_max_cos";
    case SimilarityKind::avg_min_l2: return "avg_min_l2";
    case SimilarityKind::avg_avg_cos: return "avg_avg_cos";
    case SimilarityKind::avg_avg_l2: return "avg_avg_l2";
    case SimilarityKind::max_max_cos: return "max_max_cos";
    case SimilarityKind::min_min_l2: return "min_min_l2";
  }
  return "?";
}

SimilarityKind parse_similarity_kind(std::string_view s) {
  for (auto k : kAllSimilarityKinds)
    if (to_string(k) == s) return k;
  fail(ErrorKind::validation, "unknown similarity metric \"" + std::string(s) + "\"");
}

double similarity_score(const EmbeddingSet& target, const EmbeddingSet& mixture,
                        SimilarityMetric metric) {
  return similarity_score(target.rows(), mixture.rows(), metric.kind);
}

namespace {

/// Per-target-row reductions of one dataset's pairwise scores. Pooling
/// datasets combines these exactly: max of maxima, min of minima, sums add.
struct RowStats {
  Eigen::VectorXd reduce_max;
  Eigen::VectorXd reduce_min;
  Eigen::VectorXd sum;
  double count = 0;
};

RowStats row_stats(const Eigen::MatrixXd& t, const EmbeddingSet& ds, SimilarityMetric metric) {
  const Eigen::MatrixXd s = ds.rows().cast<double>();
  require(s.cols() == t.cols(), "similarity: embedding dimension mismatch for " + ds.source_name);
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
  return {pair.rowwise().maxCoeff(), pair.rowwise().minCoeff(), pair.rowwise().sum(),
          static_cast<double>(s.rows())};
}

}  // namespace

std::vector<double> similarity_scores(const EmbeddingSet& target,
                                      std::span<const EmbeddingSet> per_dataset,
                                      std::span<const MixtureVector> order, SimilarityMetric metric) {
  require(!per_dataset.empty(), "similarity: no candidate datasets");
  const Eigen::MatrixXd t = target.rows().cast<double>();
  require(t.rows() >= 1, "similarity: empty target embedding set");
  std::vector<RowStats> stats;
  stats.reserve(per_dataset.size());
  for (const auto& ds : per_dataset) stats.push_back(row_stats(t, ds, metric));

  std::vector<double> out;
  out.reserve(order.size());
  for (const auto& alpha : order) {
    require(alpha.size() == static_cast<int>(per_dataset.size()) && !alpha.empty(),
            "similarity: invalid mixture " + alpha.str());
    const auto idx = alpha.indices();
    Eigen::VectorXd mx = stats[idx[0]].reduce_max;
    Eigen::VectorXd mn = stats[idx[0]].reduce_min;
    Eigen::VectorXd sum = stats[idx[0]].sum;
    double count = stats[idx[0]].count;
    for (std::size_t j = 1; j < idx.size(); ++j) {
      const auto& st = stats[idx[j]];
      mx = mx.cwiseMax(st.reduce_max);
      mn = mn.cwiseMin(st.reduce_min);
      sum += st.sum;
      count += st.count;
    }
    double score = 0.0;
    switch (metric.kind) {
      case SimilarityKind::avg_max_cos: score = mx.mean(); break;
      case SimilarityKind::avg_min_l2: score = mn.mean(); break;
      case SimilarityKind::avg_avg_cos:
      case SimilarityKind::avg_avg_l2: score = (sum / count).mean(); break;
      case SimilarityKind::max_max_cos: score = mx.maxCoeff(); break;
      case SimilarityKind::min_min_l2: score = mn.minCoeff(); break;
    }
    out.push_back(score);
  }
  return out;
}

std::pair<MixtureVector, double> similarity_select(const EmbeddingSet& target,
                                                   std::span<const EmbeddingSet> per_dataset,
                                                   SimilarityMetric metric) {
  const int n = static_cast<int>(per_dataset.size());
  require(n >= 1, "similarity_select: no candidate datasets");
  const auto order = gray_code_order(n);
  const auto scores = similarity_scores(target, per_dataset, order, metric);
  std::size_t best = 0;
  for (std::size_t i = 1; i < order.size(); ++i) {
    if (metric.better(scores[i], scores[best]) ||
        (scores[i] == scores[best] && tie_break_less(order[i], order[best])))
      best = i;
  }
  return {order[best], scores[best]};
}

double random_selection_mean(const std::map<MixtureVector, Score, MixtureLess>& scores,
                             bool require_complete) {
  require(!scores.empty(), "random_selection_mean: empty score table");
  if (require_complete) {
    const int n = scores.begin()->first.size();
    require(n <= 62, "random_selection_mean: exact mode needs N <= 62");
    const auto expected = (std::uint64_t{1} << n) - 1;
    bool complete = scores.size() == expected;
    for (const auto& [alpha, _] : scores) complete = complete && alpha.size() == n && !alpha.empty();
    require(complete, "random_selection_mean: incomplete score table (" +
                          std::to_string(scores.size()) + " of " + std::to_string(expected) +
                          " mixtures)");
  }
  double sum = 0.0;
  for (const auto& [_, s] : scores) sum += s.accuracy;
  return sum / static_cast<double>(scores.size());
}

MixtureVector all_datasets_vector(int n) { return MixtureVector::all(n); }

}  // namespace mergemix
