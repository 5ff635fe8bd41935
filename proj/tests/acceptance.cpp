// Prints one PASS/FAIL line per acceptance criterion and exits nonzero if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <spdlog/fmt/fmt.h>
#include <spdlog/spdlog.h>

#include "mergemix/baselines.hpp"
#include "mergemix/error.hpp"
#include "mergemix/evaluator.hpp"
#include "mergemix/merge.hpp"
#include "mergemix/mlp.hpp"
#include "mergemix/search.hpp"
#include "mergemix/tensor_store.hpp"
#include "mergemix/toy_bench.hpp"
#include "support.hpp"

using namespace mergemix;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

int failures = 0;

void report(int id, const char* title, double limit_s, const std::function<Outcome()>& body) {
  const auto start = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const bool in_time = secs < limit_s;
  const bool pass = o.pass && in_time;
  failures += !pass;
  std::printf("%s C%d %s: %s [%.1f s, limit %.0f s%s]\n", pass ? "PASS" : "FAIL", id, title, o.detail.c_str(),
              secs, limit_s, in_time ? "" : ", TOO SLOW");
  std::fflush(stdout);
}

bool better_or_tied(double a, double b, const MixtureVector& x, const MixtureVector& y) {
  return a > b || (a == b && tie_break_less(x, y));
}

// ---- 1 ----

Outcome merge_algebra() {
  std::mt19937_64 gen(2024);
  double worst_incremental = 0, worst_perm = 0;
  int identity_fail = 0, hull_fail = 0;
  for (int b = 0; b < 100; ++b) {
    const int n = 1 + static_cast<int>(gen() % 12);
    const auto bank = testing::random_bank(gen, n, b % 2 ? 1e3f : 1.0f);
    for (int i = 0; i < n; ++i)
      identity_fail += !(merge_uniform(bank, MixtureVector::single(n, i)) == bank.models[i]);

    // Permutation: reversed bank, reversed mask.
    std::vector<Checkpoint> rev(bank.models.rbegin(), bank.models.rend());
    const auto rbank = ModelBank::make(rev);

    const auto order = gray_code_order(n);
    SubsetMerger merger(bank, order);
    std::size_t k = 0;
    while (merger.next()) {
      const auto& a = merger.alpha();
      const bool probe = n <= 8 || k++ % 37 == 0;
      if (!probe) continue;
      const auto direct = merge_uniform(bank, a);
      worst_incremental = std::max(worst_incremental, testing::max_rel_diff(merger.merged(), direct));
      std::uint64_t rmask = 0;
      for (int i : a.indices()) rmask |= std::uint64_t{1} << (n - 1 - i);
      worst_perm = std::max(worst_perm, testing::max_rel_diff(merge_uniform(rbank, MixtureVector(n, rmask)), direct));
      for (const auto& [name, t] : direct.tensors) {
        for (Eigen::Index e = 0; e < t.data.size(); ++e) {
          float lo = std::numeric_limits<float>::infinity(), hi = -lo;
          for (int i : a.indices()) {
            lo = std::min(lo, bank.models[i].tensors.at(name).data[e]);
            hi = std::max(hi, bank.models[i].tensors.at(name).data[e]);
          }
          hull_fail += t.data[e] < lo || t.data[e] > hi;
        }
      }
    }
  }
  const bool pass = identity_fail == 0 && hull_fail == 0 && worst_incremental <= 1e-6 && worst_perm <= 1e-6;
  return {pass, fmt::format("100 banks, N<=12: identity failures {}, hull violations {}, max rel incremental {:.2e}, "
                            "permutation {:.2e} (tol 1e-6)",
                            identity_fail, hull_fail, worst_incremental, worst_perm)};
}

// ---- 2 ----

Outcome search_oracle() {
  std::mt19937_64 gen(77);
  int mismatches = 0, tied_instances = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 3 + trial % 6;
    const auto bank = testing::random_bank(gen, n);
    // Coarse score grid so exact ties are common.
    std::map<std::uint64_t, double> table;
    const int levels = 2 + static_cast<int>(gen() % 6);
    for (std::uint64_t m = 1; m < (std::uint64_t{1} << n); ++m)
      table[m] = static_cast<double>(gen() % levels) / levels;
    const Objective objective = trial % 5 == 4 ? Objective::min_loss : Objective::max_accuracy;
    EvalFn eval = [&](const MixtureVector& a, const Checkpoint&) {
      const double v = table.at(a.mask());
      return Score{v, 1.0 - v, 10};
    };

    MixtureVector best;
    double best_v = -1;
    int at_best = 0;
    for (std::uint64_t m = 1; m < (std::uint64_t{1} << n); ++m) {
      const MixtureVector a(n, m);
      // Maximizing accuracy and minimizing loss = 1 - v pick the same v.
      const double v = table[m];
      if (v > best_v) at_best = 0;
      if (v >= best_v) ++at_best;
      if (best_v < 0 || better_or_tied(v, best_v, a, best)) {
        best = a;
        best_v = v;
      }
    }
    tied_instances += at_best > 1;
    SearchConfig cfg;
    cfg.objective = objective;
    cfg.jobs = 1 + trial % 4;
    const auto r = run_search(bank, eval, cfg);
    mismatches += !(r.best_alpha == best);
  }
  return {mismatches == 0, fmt::format("50 mock evaluators, N in 3..8: {} mismatches, {} instances with tied maxima",
                                       mismatches, tied_instances)};
}

// ---- 3 ----

using Rows = std::vector<std::vector<double>>;

double reference_similarity(const Rows& t, const Rows& s, SimilarityKind kind) {
  auto f = [](double v) { return static_cast<double>(static_cast<float>(v)); };
  const bool cosine = SimilarityMetric{kind}.is_cosine();
  double outer = 0, gmax = -INFINITY, gmin = INFINITY;
  for (const auto& x : t) {
    double mx = -INFINITY, mn = INFINITY, sum = 0;
    for (const auto& y : s) {
      double dot = 0, nx = 0, ny = 0, d2 = 0;
      for (std::size_t k = 0; k < x.size(); ++k) {
        dot += f(x[k]) * f(y[k]);
        nx += f(x[k]) * f(x[k]);
        ny += f(y[k]) * f(y[k]);
        d2 += (f(x[k]) - f(y[k])) * (f(x[k]) - f(y[k]));
      }
      const double v = cosine ? dot / (std::sqrt(nx) * std::sqrt(ny)) : std::sqrt(d2);
      mx = std::max(mx, v);
      mn = std::min(mn, v);
      sum += v;
    }
    gmax = std::max(gmax, mx);
    gmin = std::min(gmin, mn);
    if (kind == SimilarityKind::avg_max_cos) outer += mx;
    if (kind == SimilarityKind::avg_min_l2) outer += mn;
    if (kind == SimilarityKind::avg_avg_cos || kind == SimilarityKind::avg_avg_l2) outer += sum / s.size();
  }
  if (kind == SimilarityKind::max_max_cos) return gmax;
  if (kind == SimilarityKind::min_min_l2) return gmin;
  return outer / t.size();
}

Outcome similarity_oracle() {
  std::mt19937_64 gen(5);
  std::normal_distribution<double> g(0, 1);
  double worst = 0;
  int order_fail = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int d = 2 + trial % 7;
    const int nt = 1 + static_cast<int>(gen() % 12), ns = 1 + static_cast<int>(gen() % 20);
    Rows t(nt, std::vector<double>(d)), s(ns, std::vector<double>(d));
    for (auto* rows : {&t, &s})
      for (auto& row : *rows)
        for (auto& v : row) v = g(gen);
    auto to_set = [&](const Rows& rows) {
      RowMatrix<float> m(rows.size(), d);
      for (std::size_t i = 0; i < rows.size(); ++i)
        for (int j = 0; j < d; ++j) m(i, j) = static_cast<float>(rows[i][j]);
      return make_embedding_set(m, "x");
    };
    const auto ts = to_set(t), ss = to_set(s);
    std::map<SimilarityKind, double> v;
    for (auto k : kAllSimilarityKinds) {
      v[k] = similarity_score(ts, ss, {k});
      worst = std::max(worst, std::abs(v[k] - reference_similarity(t, s, k)));
    }
    order_fail += !(v[SimilarityKind::avg_max_cos] >= v[SimilarityKind::avg_avg_cos] &&
                    v[SimilarityKind::min_min_l2] <= v[SimilarityKind::avg_min_l2] &&
                    v[SimilarityKind::avg_min_l2] <= v[SimilarityKind::avg_avg_l2]);
  }
  return {worst <= 1e-9 && order_fail == 0,
          fmt::format("100 instances x 6 metrics: max abs error {:.2e} (tol 1e-9), ordering violations {}", worst,
                      order_fail)};
}

// ---- 4 ----

Outcome gradient_check() {
  std::mt19937_64 gen(11);
  std::normal_distribution<double> g(0, 1);
  double worst = 0;
  long checked = 0;
  for (int trial = 0; trial < 20; ++trial) {
    auto m = Mlp<double>::zeros(10, 32, 8);
    for (auto* p : {&m.w1, &m.w2})
      for (Eigen::Index i = 0; i < p->size(); ++i) p->data()[i] = 0.5 * g(gen);
    for (auto* p : {&m.b1, &m.b2})
      for (Eigen::Index i = 0; i < p->size(); ++i) p->data()[i] = 0.5 * g(gen);
    Eigen::MatrixXd x(1, 10);
    for (Eigen::Index j = 0; j < 10; ++j) x(0, j) = g(gen);
    const std::vector<int> label{static_cast<int>(gen() % 8)};

    auto grad = Mlp<double>::zeros(10, 32, 8);
    loss_and_gradient(m, x, label, grad);
    auto loss = [&] { return cross_entropy(m.logits(x), label)[0]; };
    const double h = 1e-6;
    std::vector<std::pair<double*, const double*>> params;
    for (auto [p, q] : {std::pair{&m.w1, &grad.w1}, std::pair{&m.w2, &grad.w2}})
      for (Eigen::Index i = 0; i < p->size(); ++i) params.emplace_back(p->data() + i, q->data() + i);
    for (auto [p, q] : {std::pair{&m.b1, &grad.b1}, std::pair{&m.b2, &grad.b2}})
      for (Eigen::Index i = 0; i < p->size(); ++i) params.emplace_back(p->data() + i, q->data() + i);
    for (auto [p, analytic] : params) {
      const double keep = *p;
      *p = keep + h;
      const double up = loss();
      *p = keep - h;
      const double down = loss();
      *p = keep;
      const double numeric = (up - down) / (2 * h);
      // Relative error, floored so near-zero gradients are compared absolutely.
      worst = std::max(worst, std::abs(numeric - *analytic) / std::max({std::abs(numeric), std::abs(*analytic), 1e-3}));
      ++checked;
    }
  }
  return {worst <= 1e-4, fmt::format("20 (weights, sample) pairs, {} parameters: max relative error {:.2e} (tol 1e-4)",
                                     checked, worst)};
}

// ---- 5 and 6 ----

std::map<std::uint64_t, BenchReport> bench_runs;

const BenchReport& bench_for(std::uint64_t seed) {
  auto it = bench_runs.find(seed);
  if (it == bench_runs.end()) {
    BenchConfig cfg;
    cfg.seed = seed;
    it = bench_runs.emplace(seed, run_benchmark(cfg, TrainConfig{})).first;
  }
  return it->second;
}

Outcome correlation_reproduction() {
  const auto& r = bench_for(42);
  if (!r.merged_correlation) return {false, "no reportable merged correlation"};
  const double merged = r.merged_correlation->average_r;
  const auto best_kind = parse_similarity_kind(r.best_similarity_metric);
  const auto best_sim = oriented_similarity_correlation(r, best_kind);
  std::string sims;
  for (auto k : kAllSimilarityKinds) {
    const auto v = oriented_similarity_correlation(r, k);
    sims += fmt::format("{}{}={}", sims.empty() ? "" : ", ", to_string(k), v ? fmt::format("{:.3f}", *v) : "n/a");
  }
  const bool pass = merged >= 0.4 && (!best_sim || merged > *best_sim);
  return {pass, fmt::format("merged r {:.3f} (need >= 0.4), logit r {:.3f}; best similarity metric {} oriented r {} "
                            "(merged must exceed it); all oriented: {}",
                            merged, r.merged_logit_correlation ? r.merged_logit_correlation->average_r : NAN,
                            r.best_similarity_metric, best_sim ? fmt::format("{:.3f}", *best_sim) : "n/a", sims)};
}

Outcome selection_quality() {
  const std::vector<std::uint64_t> seeds{42, 43, 44, 45, 46};
  const std::size_t targets = BenchConfig{}.num_targets;
  std::vector<double> m2m(targets), rnd(targets), all(targets);
  int oracle_violations = 0;
  for (auto seed : seeds) {
    const auto& r = bench_for(seed);
    for (std::size_t t = 0; t < targets; ++t) {
      const auto& tr = r.targets.at(t);
      m2m[t] += tr.method("merge_to_mix_finetuned").test_accuracy / seeds.size();
      rnd[t] += tr.method("random_mean").test_accuracy / seeds.size();
      all[t] += tr.method("all_datasets").test_accuracy / seeds.size();
      oracle_violations += tr.method("oracle").val_accuracy < tr.method("merge_to_mix_finetuned").val_accuracy;
    }
  }
  int beat_random = 0, beat_all = 0;
  std::string per;
  for (std::size_t t = 0; t < targets; ++t) {
    beat_random += m2m[t] >= rnd[t];
    beat_all += m2m[t] >= all[t];
    per += fmt::format("{}T{} m2m {:.4f} random {:.4f} all {:.4f}", t ? "; " : "", t + 1, m2m[t], rnd[t], all[t]);
  }
  const bool pass = beat_random == static_cast<int>(targets) && 2 * beat_all > static_cast<int>(targets) &&
                    oracle_violations == 0;
  return {pass, fmt::format("seeds 42-46: >= random on {}/{}, >= all-datasets on {}/{}, oracle val violations {}; {}",
                            beat_random, targets, beat_all, targets, oracle_violations, per)};
}

// ---- 7 ----

Outcome format_and_protocol() {
  testing::TempDir dir;
  std::mt19937_64 gen(9);
  int roundtrip_fail = 0;
  for (int i = 0; i < 20; ++i) {
    auto ckpt = testing::random_bank(gen, 1, 1e4f).models[0];
    if (i % 2) ckpt.metadata = {{"note", "run " + std::to_string(i)}};
    const auto bytes = encode_checkpoint(ckpt);
    const auto path = dir / "c.mtm";
    write_checkpoint(ckpt, path);
    roundtrip_fail += !(read_checkpoint(path) == ckpt) || testing::read_file(path) != bytes ||
                      encode_checkpoint(decode_checkpoint(bytes)) != bytes;
  }

  const auto good = encode_checkpoint(testing::single("w", testing::vec_tensor({1, 2, 3})));
  auto with = [&](const std::string& from, const std::string& to) {
    auto b = good;
    b.replace(b.find(from), from.size(), to);
    return b;
  };
  std::uint64_t header_len = 0;
  std::memcpy(&header_len, good.data(), 8);
  auto huge_len = good;
  const std::uint64_t big = 1ull << 40;
  std::memcpy(huge_len.data(), &big, 8);
  const std::vector<std::pair<std::string, std::string>> malformed{
      {"truncated header", good.substr(0, 12)},
      {"header length past end", huge_len},
      {"truncated data", good.substr(0, good.size() - 4)},
      {"trailing bytes", good + std::string(4, '\0')},
      {"unsupported dtype", with("F32", "F16")},
      {"not JSON", with("{", "x")},
      {"shape mismatch", with("[3]", "[4]")},
  };
  std::vector<std::string> accepted;
  for (const auto& [label, bytes] : malformed) {
    try {
      (void)decode_checkpoint(bytes);
      accepted.push_back(label);
    } catch (const Error&) {
    }
  }

  int protocol_fail = 0;
  const auto ok = testing::write_script(dir / "ok.sh", "echo log line\necho '{\"accuracy\":0.25,\"loss\":1.5}'");
  const auto s = evaluate_external(dir / "c.mtm", "d", ok.string() + " {checkpoint} {data}");
  protocol_fail += !(s.accuracy == 0.25 && s.mean_loss == 1.5);
  for (const char* body : {"exit 3", "echo '{\"accuracy\":1.5,\"loss\":0.1}'", "echo '{\"accuracy\":0.5,\"loss\":-2}'"}) {
    const auto bad = testing::write_script(dir / "bad.sh", body);
    try {
      (void)evaluate_external(dir / "c.mtm", "d", bad.string() + " {checkpoint} {data}");
      ++protocol_fail;
    } catch (const Error& e) {
      protocol_fail += e.kind() != ErrorKind::evaluator;
    }
  }
  std::string acc;
  for (const auto& a : accepted) acc += " " + a;
  return {roundtrip_fail == 0 && accepted.empty() && protocol_fail == 0,
          fmt::format("20 round trips ({} failures), {}/{} malformed files rejected{}, evaluator protocol failures {}",
                      roundtrip_fail, malformed.size() - accepted.size(), malformed.size(),
                      accepted.empty() ? "" : " (accepted:" + acc + ")", protocol_fail)};
}

// ---- 8 ----

Outcome determinism() {
  testing::TempDir dir;
  const std::string cli = MERGEMIX_CLI_PATH;
  for (const char* run : {"a", "b"}) {
    const auto r = testing::run(cli + " bench --seed 42 --out-dir " + (dir / run).string());
    if (r.exit_code != 0) return {false, fmt::format("bench run {} exited {}", run, r.exit_code)};
  }
  std::string differing;
  int compared = 0;
  for (const char* f : {"report.json", "table.csv", "plot.csv", "summary.csv", "correlation.csv"}) {
    const auto a = dir / "a" / f;
    if (!std::filesystem::exists(a)) continue;
    ++compared;
    if (testing::read_file(a) != testing::read_file(dir / "b" / f)) differing += std::string(" ") + f;
  }
  return {differing.empty() && compared >= 4,
          fmt::format("two `bench --seed 42` runs: {} report files compared, {}", compared,
                      differing.empty() ? "all byte-identical" : "differ:" + differing)};
}

}  // namespace

int main() {
  spdlog::set_level(spdlog::level::err);
  report(1, "merge algebra", 30, merge_algebra);
  report(2, "search oracle equivalence", 30, search_oracle);
  report(3, "similarity metric oracle", 30, similarity_oracle);
  report(4, "trainer gradient check", 10, gradient_check);
  report(5, "correlation reproduction", 300, correlation_reproduction);
  report(6, "selection-quality ordering", 1500, selection_quality);
  report(7, "format round trip and protocol", 10, format_and_protocol);
  report(8, "determinism", 600, determinism);
  std::printf("%d of 8 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
