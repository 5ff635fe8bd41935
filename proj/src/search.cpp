#include "mergemix/search.hpp"

#include <chrono>
#include <exception>
#include <thread>

#include "mergemix/error.hpp"

namespace mergemix {

std::string_view to_string(Objective o) {
  return o == Objective::max_accuracy ? "max_accuracy" : "min_loss";
}

Objective parse_objective(std::string_view s) {
  if (s == "max_accuracy" || s == "accuracy") return Objective::max_accuracy;
  if (s == "min_loss" || s == "loss") return Objective::min_loss;
  fail(ErrorKind::validation, "unknown objective \"" + std::string(s) + "\"");
}

bool strictly_better(const Score& a, const Score& b, Objective objective) {
  return objective == Objective::max_accuracy ? a.accuracy > b.accuracy : a.mean_loss < b.mean_loss;
}

bool preferred(const Score& a, const MixtureVector& alpha_a, const Score& b,
               const MixtureVector& alpha_b, Objective objective) {
  if (strictly_better(a, b, objective)) return true;
  if (strictly_better(b, a, objective)) return false;
  return tie_break_less(alpha_a, alpha_b);
}

namespace {

void evaluate_slice(const ModelBank& bank, const EvalFn& eval_fn,
                    std::span<const MixtureVector> slice, std::span<ScoreRecord> out) {
  SubsetMerger merger(bank, slice);
  std::size_t i = 0;
  while (merger.next()) {
    const auto start = std::chrono::steady_clock::now();
    Score s;
    try {
      s = eval_fn(merger.alpha(), merger.merged());
    } catch (const Error& e) {
      throw Error(e.kind(), "mixture " + merger.alpha().str() + ": " + e.what());
    } catch (const std::exception& e) {
      throw Error(ErrorKind::evaluator, "mixture " + merger.alpha().str() + ": " + e.what());
    }
    const auto stop = std::chrono::steady_clock::now();
    out[i].alpha = merger.alpha();
    out[i].merged_score = s;
    out[i].elapsed_ms =
        std::chrono::duration_cast<std::chrono::milliseconds>(stop - start).count();
    ++i;
  }
}

}  // namespace

SearchReport run_search(const ModelBank& bank, const EvalFn& eval_fn, const SearchConfig& config) {
  std::vector<MixtureVector> order = config.candidates;
  if (order.empty()) {
    require(bank.size() <= config.max_exhaustive_n,
            "bank has " + std::to_string(bank.size()) +
                " datasets, above max_exhaustive_n = " + std::to_string(config.max_exhaustive_n) +
                "; pass an explicit candidate list");
    order = gray_code_order(bank.size());
  }
  for (const auto& a : order) {
    require(a.size() == bank.size(), "candidate " + a.str() + " does not match bank size");
    require(!a.empty(), "empty mixture in candidate list");
  }

  SearchReport report;
  report.objective = config.objective;
  report.target_name = config.target_name;
  report.records.resize(order.size());

  int jobs = config.jobs > 0 ? config.jobs : static_cast<int>(std::thread::hardware_concurrency());
  jobs = std::clamp<int>(jobs, 1, static_cast<int>(order.size()));
  if (jobs == 1) {
    evaluate_slice(bank, eval_fn, order, report.records);
  } else {
    std::vector<std::exception_ptr> errors(jobs);
    std::vector<std::thread> workers;
    const std::size_t per = (order.size() + jobs - 1) / jobs;
    for (int w = 0; w < jobs; ++w) {
      const std::size_t begin = std::min(order.size(), w * per);
      const std::size_t end = std::min(order.size(), begin + per);
      workers.emplace_back([&, w, begin, end] {
        try {
          evaluate_slice(bank, eval_fn, std::span(order).subspan(begin, end - begin),
                         std::span(report.records).subspan(begin, end - begin));
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : workers) t.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  report.best_alpha = select_best(report);
  return report;
}

MixtureVector select_best(const SearchReport& report) {
  require(!report.records.empty(), "search report has no records");
  const ScoreRecord* best = &report.records.front();
  for (const auto& r : report.records) {
    if (preferred(r.merged_score, r.alpha, best->merged_score, best->alpha, report.objective))
      best = &r;
  }
  return best->alpha;
}

MixtureVector oracle_select(const std::map<MixtureVector, Score, MixtureLess>& scores) {
  require(!scores.empty(), "oracle_select: empty score table");
  auto best = scores.begin();
  for (auto it = scores.begin(); it != scores.end(); ++it) {
    require(!it->first.empty(), "oracle_select: empty mixture");
    if (preferred(it->second, it->first, best->second, best->first, Objective::max_accuracy))
      best = it;
  }
  return best->first;
}

}  // namespace mergemix
