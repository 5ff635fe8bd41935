#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mergemix/evaluator.hpp"
#include "mergemix/merge.hpp"
#include "mergemix/mixture.hpp"

namespace mergemix {

enum class Objective { max_accuracy, min_loss };

std::string_view to_string(Objective o);
Objective parse_objective(std::string_view s);

struct ScoreRecord {
  MixtureVector alpha;
  Score merged_score;
  std::optional<Score> finetuned_score;
  std::int64_t elapsed_ms = 0;

  friend bool operator==(const ScoreRecord&, const ScoreRecord&) = default;
};

struct SearchReport {
  std::vector<ScoreRecord> records;
  MixtureVector best_alpha;
  Objective objective = Objective::max_accuracy;
  std::string target_name;

  friend bool operator==(const SearchReport&, const SearchReport&) = default;
};

struct SearchConfig {
  Objective objective = Objective::max_accuracy;
  /// Explicit candidates; empty means every non-empty mixture.
  std::vector<MixtureVector> candidates;
  int max_exhaustive_n = 20;
  /// Worker threads; 0 means hardware concurrency. Each worker owns a
  /// contiguous slice of the enumeration and its own merge buffer, so the
  /// evaluator must be safe to call concurrently when jobs > 1.
  int jobs = 0;
  std::string target_name;
};

/// True when score a beats score b under the objective; ties are false.
bool strictly_better(const Score& a, const Score& b, Objective objective);

/// True when (a, alpha_a) should be selected over (b, alpha_b): better
/// score, or equal score and preferred by tie_break_less.
bool preferred(const Score& a, const MixtureVector& alpha_a, const Score& b,
               const MixtureVector& alpha_b, Objective objective);

/// Merge, evaluate and keep the best mixture for every candidate.
/// Evaluator failures are rethrown with the offending mixture named.
SearchReport run_search(const ModelBank& bank, const EvalFn& eval_fn, const SearchConfig& config);

MixtureVector select_best(const SearchReport& report);

/// Argmax of validation accuracy, same tie-break as select_best.
MixtureVector oracle_select(const std::map<MixtureVector, Score, MixtureLess>& scores);

}  // namespace mergemix
