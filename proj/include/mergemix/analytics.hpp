#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mergemix/error.hpp"
#include "mergemix/search.hpp"

namespace mergemix {

/// Sample Pearson correlation. Throws on length mismatch, fewer than two
/// points, or a constant series.
template <typename Scalar>
Scalar pearson(std::span<const Scalar> xs, std::span<const Scalar> ys) {
  require(xs.size() == ys.size(), "pearson: length mismatch");
  require(xs.size() >= 2, "pearson: need at least two points");
  const auto n = static_cast<Scalar>(xs.size());
  Scalar mx = 0, my = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  Scalar sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const Scalar dx = xs[i] - mx;
    const Scalar dy = ys[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  require(sxx > 0 && syy > 0, "degenerate: constant series");
  const Scalar r = sxy / std::sqrt(sxx * syy);
  return std::clamp(r, Scalar(-1), Scalar(1));
}

inline double pearson(const std::vector<double>& xs, const std::vector<double>& ys) {
  return pearson<double>(std::span<const double>(xs), std::span<const double>(ys));
}

struct CorrelationPair {
  double x = 0.0;
  double y = 0.0;
  int n_selected = 0;
};

struct CorrelationInput {
  std::string task_name;
  std::vector<CorrelationPair> pairs;
};

struct CorrelationReport {
  std::map<std::string, double> per_task;
  double average_r = 0.0;
  std::int64_t excluded_count = 0;
  /// Tasks dropped for too few pairs or a constant series.
  std::vector<std::string> skipped;

  friend bool operator==(const CorrelationReport&, const CorrelationReport&) = default;
};

/// Per-task Pearson r, averaged without weights. With exclude_singletons,
/// pairs with n_selected == 1 are dropped first. Tasks left with fewer than
/// three pairs or a constant series are skipped with a warning; throws only
/// when no task survives.
CorrelationReport correlate_tasks(std::span<const CorrelationInput> inputs, bool exclude_singletons);

enum class Surrogate { merged, similarity };

struct PlotPoint {
  MixtureVector alpha;
  double x = 0.0;
  double y = 0.0;
  int n_selected = 0;
  bool is_singleton = false;

  friend bool operator==(const PlotPoint&, const PlotPoint&) = default;
};

/// Figure coordinates: y is the logit improvement of the fine-tuned model
/// over the base; x is the merged model's logit improvement, or the raw
/// similarity score (one per record) in similarity mode.
std::vector<PlotPoint> plot_coordinates(std::span<const ScoreRecord> records, double base_acc,
                                        Surrogate surrogate,
                                        std::span<const double> similarity_scores = {});

}  // namespace mergemix
