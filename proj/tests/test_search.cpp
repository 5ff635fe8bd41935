#include <algorithm>
#include <cmath>
#include <random>
#include <tuple>

#include <doctest.h>

#include "mergemix/error.hpp"
#include "mergemix/search.hpp"
#include "support.hpp"

using namespace mergemix;

namespace {

ModelBank tiny_bank(int n) {
  std::vector<Checkpoint> models;
  for (int i = 0; i < n; ++i) models.push_back(testing::single("w", testing::vec_tensor({float(i)})));
  return ModelBank::make(std::move(models));
}

EvalFn by_alpha(std::function<double(const MixtureVector&)> acc) {
  return [acc](const MixtureVector& a, const Checkpoint&) { return Score{acc(a), 1.0 - acc(a), 10}; };
}

// Full scan: sort every candidate by (score desc, popcount asc, text asc).
std::string brute_force_best(int n, const std::function<double(const MixtureVector&)>& acc) {
  std::vector<std::tuple<double, int, std::string>> all;
  for (std::uint64_t m = 1; m < (std::uint64_t{1} << n); ++m) {
    const MixtureVector a(n, m);
    all.emplace_back(-acc(a), a.count(), a.str());
  }
  std::sort(all.begin(), all.end());
  return std::get<2>(all.front());
}

SearchConfig config(int jobs = 1) {
  SearchConfig c;
  c.jobs = jobs;
  return c;
}

}  // namespace

TEST_CASE("single dataset") {
  const auto r = run_search(tiny_bank(1), by_alpha([](auto&) { return 0.1; }), config());
  CHECK(r.best_alpha.str() == "1");
  CHECK(r.records.size() == 1);
}

TEST_CASE("additive mock scorer") {
  auto acc = [](const MixtureVector& a) {
    return 0.2 * a.test(0) + 0.5 * a.test(2) - 0.1 * a.count();
  };
  const auto r = run_search(tiny_bank(3), by_alpha(acc), config());
  CHECK(r.best_alpha.str() == "101");
  CHECK(r.records.size() == 7);
  CHECK(brute_force_best(3, acc) == "101");
  for (const auto& rec : r.records) CHECK(rec.merged_score.accuracy == doctest::Approx(acc(rec.alpha)));
}

TEST_CASE("all scores tied") {
  // Fewest datasets first, then the smallest bit string: "001" < "010" < "100".
  const auto r = run_search(tiny_bank(3), by_alpha([](auto&) { return 0.5; }), config());
  CHECK(r.best_alpha.str() == "001");
}

TEST_CASE("search sees the merged model") {
  // Score = merged scalar; the 3-model bank holds 0, 1, 2 so the best is "001" (value 2).
  EvalFn eval = [](const MixtureVector&, const Checkpoint& c) {
    const double v = c.at("w").data[0];
    return Score{v / 2.0, 1.0, 1};
  };
  const auto r = run_search(tiny_bank(3), eval, config());
  CHECK(r.best_alpha.str() == "001");
  for (const auto& rec : r.records) {
    double mean = 0;
    for (int i : rec.alpha.indices()) mean += i;
    CHECK(rec.merged_score.accuracy == doctest::Approx(mean / rec.alpha.count() / 2.0));
  }
}

TEST_CASE("random mock scorers agree with a full scan") {
  std::mt19937_64 gen(2024);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 3 + trial % 6;
    // Coarse values force plenty of ties.
    std::vector<double> table(std::size_t{1} << n);
    std::uniform_int_distribution<int> level(0, 4);
    for (auto& v : table) v = level(gen) / 4.0;
    auto acc = [&](const MixtureVector& a) { return table[a.mask()]; };
    const auto expected = brute_force_best(n, acc);
    CHECK(run_search(tiny_bank(n), by_alpha(acc), config(1)).best_alpha.str() == expected);
    CHECK(run_search(tiny_bank(n), by_alpha(acc), config(3)).best_alpha.str() == expected);

    // strictly increasing transform leaves the winner alone
    auto squashed = [&](const MixtureVector& a) { return std::tanh(3.0 * acc(a) - 1.0) * 0.4 + 0.5; };
    CHECK(run_search(tiny_bank(n), by_alpha(squashed), config()).best_alpha.str() == expected);
  }
}

TEST_CASE("parallel search is deterministic") {
  std::mt19937_64 gen(9);
  std::vector<double> table(256);
  std::uniform_real_distribution<double> u(0, 1);
  for (auto& v : table) v = u(gen);
  auto acc = [&](const MixtureVector& a) { return table[a.mask()]; };
  auto strip = [](SearchReport r) {
    for (auto& rec : r.records) rec.elapsed_ms = 0;
    return r;
  };
  const auto one = strip(run_search(tiny_bank(8), by_alpha(acc), config(1)));
  const auto four = strip(run_search(tiny_bank(8), by_alpha(acc), config(4)));
  CHECK(one == four);
  CHECK(one.records.size() == 255);
}

TEST_CASE("loss objective") {
  auto loss = [](const MixtureVector& a) { return a.str() == "110" ? 0.1 : 0.3 + 0.01 * a.count(); };
  EvalFn eval = [&](const MixtureVector& a, const Checkpoint&) { return Score{0.5, loss(a), 1}; };
  auto cfg = config();
  cfg.objective = Objective::min_loss;
  CHECK(run_search(tiny_bank(3), eval, cfg).best_alpha.str() == "110");
}

TEST_CASE("explicit candidates and guards") {
  auto acc = [](const MixtureVector& a) { return 0.1 * a.count(); };
  auto cfg = config();
  cfg.candidates = {MixtureVector::parse("1000"), MixtureVector::parse("0110")};
  const auto r = run_search(tiny_bank(4), by_alpha(acc), cfg);
  CHECK(r.records.size() == 2);
  CHECK(r.best_alpha.str() == "0110");

  auto small = config();
  small.max_exhaustive_n = 3;
  CHECK_THROWS_AS(run_search(tiny_bank(4), by_alpha(acc), small), Error);

  cfg.candidates = {MixtureVector::parse("0000")};
  CHECK_THROWS_AS(run_search(tiny_bank(4), by_alpha(acc), cfg), Error);
}

TEST_CASE("evaluator failures name the mixture") {
  EvalFn eval = [](const MixtureVector& a, const Checkpoint&) -> Score {
    if (a.str() == "11") fail(ErrorKind::evaluator, "evaluator failed (exit 3)");
    return {0.5, 0.5, 1};
  };
  try {
    run_search(tiny_bank(2), eval, config());
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::evaluator);
    CHECK(std::string(e.what()) == "mixture 11: evaluator failed (exit 3)");
  }
}

TEST_CASE("select_best") {
  SearchReport r;
  r.records = {{MixtureVector::parse("10"), {0.7, 0.4, 1}, {}, 0}};
  CHECK(select_best(r).str() == "10");
  r.records = {{MixtureVector::parse("100"), {0.3, 0.5, 1}, {}, 0},
               {MixtureVector::parse("011"), {0.9, 0.2, 1}, {}, 0},
               {MixtureVector::parse("010"), {0.7, 0.2, 1}, {}, 0}};
  CHECK(select_best(r).str() == "011");
  r.objective = Objective::min_loss;
  CHECK(select_best(r).str() == "010");
  CHECK_THROWS_AS(select_best(SearchReport{}), Error);
}

TEST_CASE("oracle_select") {
  using Table = std::map<MixtureVector, Score, MixtureLess>;
  auto table = [](std::initializer_list<std::pair<const char*, double>> entries) {
    Table t;
    for (auto [bits, acc] : entries) t.emplace(MixtureVector::parse(bits), Score{acc, 0.0, 1});
    return t;
  };
  CHECK(oracle_select(table({{"01", 0.4}, {"10", 0.6}, {"11", 0.8}})).str() == "11");
  CHECK(oracle_select(table({{"01", 0.7}, {"10", 0.7}})).str() == "01");
  CHECK_THROWS_AS(oracle_select(Table{}), Error);
}
