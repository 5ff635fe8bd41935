#include "mergemix/analytics.hpp"

#include <spdlog/spdlog.h>

namespace mergemix {

CorrelationReport correlate_tasks(std::span<const CorrelationInput> inputs, bool exclude_singletons) {
  CorrelationReport report;
  double total = 0.0;
  for (const auto& task : inputs) {
    std::vector<double> xs, ys;
    for (const auto& p : task.pairs) {
      require(std::isfinite(p.x) && std::isfinite(p.y),
              "correlate: non-finite value in task " + task.task_name);
      if (exclude_singletons && p.n_selected == 1) {
        ++report.excluded_count;
        continue;
      }
      xs.push_back(p.x);
      ys.push_back(p.y);
    }
    if (xs.size() < 3) {
      spdlog::warn("correlate: skipping task {} ({} pairs after exclusion)", task.task_name, xs.size());
      report.skipped.push_back(task.task_name);
      continue;
    }
    try {
      const double r = pearson(xs, ys);
      report.per_task[task.task_name] = r;
      total += r;
    } catch (const Error& e) {
      spdlog::warn("correlate: skipping task {} ({})", task.task_name, e.what());
      report.skipped.push_back(task.task_name);
    }
  }
  require(!report.per_task.empty(), "correlate: no task has enough pairs for a correlation");
  report.average_r = total / static_cast<double>(report.per_task.size());
  return report;
}

std::vector<PlotPoint> plot_coordinates(std::span<const ScoreRecord> records, double base_acc,
                                        Surrogate surrogate, std::span<const double> similarity_scores) {
  require(base_acc >= 0.0 && base_acc <= 1.0, "plot_coordinates: base accuracy out of [0, 1]");
  if (surrogate == Surrogate::similarity)
    require(similarity_scores.size() == records.size(),
            "plot_coordinates: need one similarity score per record");
  std::vector<PlotPoint> out;
  out.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    require(r.finetuned_score.has_value(),
            "plot_coordinates: record " + r.alpha.str() + " has no fine-tuned score");
    PlotPoint p;
    p.alpha = r.alpha;
    p.n_selected = r.alpha.count();
    p.is_singleton = p.n_selected == 1;
    p.y = logit_improvement(r.finetuned_score->accuracy, base_acc);
    p.x = surrogate == Surrogate::merged ? logit_improvement(r.merged_score.accuracy, base_acc)
                                         : similarity_scores[i];
    out.push_back(p);
  }
  return out;
}

}  // namespace mergemix
