// mergemix command-line front end. Results go to stdout as one JSON line,
// diagnostics to stderr. Exit codes: 0 ok, 1 validation, 2 I/O, 3 evaluator.

#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "mergemix/analytics.hpp"
#include "mergemix/baselines.hpp"
#include "mergemix/error.hpp"
#include "mergemix/evaluator.hpp"
#include "mergemix/manifest.hpp"
#include "mergemix/merge.hpp"
#include "mergemix/report.hpp"
#include "mergemix/search.hpp"
#include "mergemix/tensor_store.hpp"
#include "mergemix/toy_bench.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace mergemix;

namespace {

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("mergemix");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::warn);
  if (const char* env = std::getenv("MERGEMIX_LOG")) {
    const std::string level = env;
    if (level == "error") spdlog::set_level(spdlog::level::err);
    else if (level == "warn") spdlog::set_level(spdlog::level::warn);
    else if (level == "info") spdlog::set_level(spdlog::level::info);
    else if (level == "debug") spdlog::set_level(spdlog::level::debug);
    else spdlog::warn("ignoring MERGEMIX_LOG={} (expected error, warn, info or debug)", level);
  }
}

fs::path sibling(const fs::path& p, const std::string& suffix) {
  fs::path out = p;
  out += suffix;
  return out;
}

void ensure_parent(const fs::path& p) {
  if (!p.has_parent_path()) return;
  std::error_code ec;
  fs::create_directories(p.parent_path(), ec);
  if (ec) fail(ErrorKind::io, "cannot create " + p.parent_path().string() + ": " + ec.message());
}

/// Loads bank/<index>_<name>.mtm files; indices must be 0..N-1.
ModelBank load_bank(const fs::path& dir) {
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) fail(ErrorKind::io, "bank directory not found: " + dir.string());
  static const std::regex pattern(R"((\d+)_(.+)\.mtm)");
  std::map<int, std::pair<std::string, fs::path>> found;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string file = entry.path().filename().string();
    std::smatch m;
    if (!entry.is_regular_file() || !std::regex_match(file, m, pattern)) continue;
    const int index = std::stoi(m[1].str());
    require(found.emplace(index, std::make_pair(m[2].str(), entry.path())).second,
            "bank: duplicate index " + std::to_string(index));
  }
  if (found.empty()) fail(ErrorKind::io, "bank: no <index>_<name>.mtm files in " + dir.string());
  std::vector<Checkpoint> models;
  std::vector<std::string> names;
  int expected = 0;
  for (const auto& [index, entry] : found) {
    require(index == expected, "bank: indices must run 0..N-1, missing " + std::to_string(expected));
    ++expected;
    names.push_back(entry.first);
    models.push_back(read_checkpoint(entry.second));
  }
  return ModelBank::make(std::move(models), std::move(names));
}

std::vector<fs::path> bank_files(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".mtm") out.push_back(entry.path());
  std::sort(out.begin(), out.end());
  return out;
}

json names_of(const ModelBank& bank, const MixtureVector& alpha) {
  json names = json::array();
  for (int i : alpha.indices()) names.push_back(bank.names[i]);
  return names;
}

RunManifest start_manifest(std::string command) {
  RunManifest m;
  m.command = std::move(command);
  m.started_at = utc_timestamp();
  return m;
}

// ---- merge ----

struct MergeArgs {
  std::vector<fs::path> models;
  fs::path out;
  std::vector<double> weights;
};

int cmd_merge(const MergeArgs& a) {
  RunManifest manifest = start_manifest("merge");
  std::vector<Checkpoint> models;
  for (const auto& p : a.models) models.push_back(read_checkpoint(p));
  // Metadata survives only when every input agrees on it.
  const auto metadata = models.front().metadata;
  bool same_metadata = true;
  for (const auto& m : models) same_metadata = same_metadata && m.metadata == metadata;

  const ModelBank bank = ModelBank::make(std::move(models));
  Checkpoint merged = a.weights.empty() ? merge_uniform(bank, MixtureVector::all(bank.size()))
                                        : merge_weighted(bank, a.weights);
  if (same_metadata) merged.metadata = metadata;
  ensure_parent(a.out);
  write_checkpoint(merged, a.out);

  manifest.config = {{"models", a.models.size()}, {"weights", a.weights}};
  manifest.inputs = a.models;
  manifest.outputs = {a.out};
  manifest.finished_at = utc_timestamp();
  manifest.write(sibling(a.out, ".manifest.json"));

  std::cout << json{{"out", a.out.string()},
                    {"tensor_count", merged.tensors.size()},
                    {"parameter_count", merged.parameter_count()}}
                   .dump()
            << "\n";
  return 0;
}

// ---- search ----

struct SearchArgs {
  fs::path bank;
  std::string target;
  std::string evaluator = "builtin";
  std::string objective = "accuracy";
  fs::path out;
  int jobs = 0;
  int max_exhaustive_n = 20;
  std::vector<std::string> candidates;
};

int cmd_search(const SearchArgs& a) {
  RunManifest manifest = start_manifest("search");
  const ModelBank bank = load_bank(a.bank);

  SearchConfig cfg;
  cfg.objective = parse_objective(a.objective);
  cfg.jobs = a.jobs;
  cfg.max_exhaustive_n = a.max_exhaustive_n;
  for (const auto& c : a.candidates) cfg.candidates.push_back(MixtureVector::parse(c));

  std::optional<EvalDataset> data;
  EvalFn eval;
  fs::path scratch;
  if (a.evaluator == "builtin") {
    data = read_dataset(a.target);
    cfg.target_name = data->name;
    eval = builtin_evaluator(*data);
    manifest.inputs.push_back(a.target);
  } else {
    cfg.target_name = a.target;
    scratch = fs::temp_directory_path() / ("mergemix-search-" + std::to_string(::getpid()));
    eval = external_evaluator(a.evaluator, a.target, scratch);
  }

  SearchReport report;
  try {
    report = run_search(bank, eval, cfg);
  } catch (...) {
    if (!scratch.empty()) fs::remove_all(scratch);
    throw;
  }
  if (!scratch.empty()) fs::remove_all(scratch);

  ensure_parent(a.out);
  const fs::path json_out = fs::path(a.out).replace_extension(".json");
  emit_report(report, ReportFormat::csv, a.out);
  emit_report(report, ReportFormat::json, json_out);

  manifest.config = {{"bank", a.bank.string()},          {"target", a.target},
                     {"evaluator", a.evaluator},         {"objective", to_string(cfg.objective)},
                     {"max_exhaustive_n", a.max_exhaustive_n}, {"candidates", a.candidates}};
  for (const auto& p : bank_files(a.bank)) manifest.inputs.push_back(p);
  manifest.outputs = {a.out, json_out};
  manifest.finished_at = utc_timestamp();
  manifest.write(sibling(a.out, ".manifest.json"));

  const auto& best = report.best_alpha;
  const ScoreRecord* rec = nullptr;
  for (const auto& r : report.records)
    if (r.alpha == best) rec = &r;
  std::cout << json{{"best_alpha", best.str()},
                    {"datasets", names_of(bank, best)},
                    {"accuracy", rec->merged_score.accuracy},
                    {"loss", rec->merged_score.mean_loss},
                    {"evaluated", report.records.size()}}
                   .dump()
            << "\n";
  return 0;
}

// ---- similarity ----

struct SimilarityArgs {
  fs::path target;
  std::vector<fs::path> datasets;
  std::string metric = "avg_max_cos";
  fs::path out;
};

int cmd_similarity(const SimilarityArgs& a) {
  RunManifest manifest = start_manifest("similarity");
  const SimilarityMetric metric{parse_similarity_kind(a.metric)};
  const EmbeddingSet target = read_embeddings(a.target);
  std::vector<EmbeddingSet> per_dataset;
  for (const auto& p : a.datasets) per_dataset.push_back(read_embeddings(p));
  require(per_dataset.size() <= 30, "similarity: at most 30 candidate datasets");

  const auto order = gray_code_order(static_cast<int>(per_dataset.size()));
  const auto scores = similarity_scores(target, per_dataset, order, metric);
  const auto [best, best_score] = similarity_select(target, per_dataset, metric);

  ensure_parent(a.out);
  write_text_atomic(a.out, similarity_csv(order, a.metric, scores));

  manifest.config = {{"metric", a.metric}};
  manifest.inputs.push_back(a.target);
  for (const auto& p : a.datasets) manifest.inputs.push_back(p);
  manifest.outputs = {a.out};
  manifest.finished_at = utc_timestamp();
  manifest.write(sibling(a.out, ".manifest.json"));

  json names = json::array();
  for (int i : best.indices()) names.push_back(per_dataset[i].source_name);
  std::cout << json{{"best_alpha", best.str()}, {"datasets", names}, {"metric", a.metric},
                    {"score", best_score}}
                   .dump()
            << "\n";
  return 0;
}

// ---- correlate ----

struct CorrelateArgs {
  fs::path input;
  fs::path out;
  bool keep_singletons = false;
};

double parse_number(const std::string& field, const std::string& where) {
  double v = 0.0;
  const auto* end = field.data() + field.size();
  const auto [ptr, ec] = std::from_chars(field.data(), end, v);
  require(ec == std::errc() && ptr == end, where + ": not a number: \"" + field + "\"");
  return v;
}

/// Reads task,x,y,n_selected rows (header required, extra columns ignored).
std::vector<CorrelationInput> read_pairs_csv(const fs::path& path) {
  std::istringstream in(read_text(path));
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), path.string() + ": empty file");
  auto split = [](const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string field;
    while (std::getline(ss, field, ',')) out.push_back(field);
    if (!s.empty() && s.back() == ',') out.emplace_back();
    return out;
  };
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split(line);
  auto column = [&](const std::string& name) {
    auto it = std::find(header.begin(), header.end(), name);
    require(it != header.end(), path.string() + ": missing column " + name);
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t c_task = column("task"), c_x = column("x"), c_y = column("y"),
                    c_n = column("n_selected");

  std::vector<CorrelationInput> tasks;
  std::map<std::string, std::size_t> index;
  for (int row = 2; std::getline(in, line); ++row) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split(line);
    const std::string where = path.string() + ":" + std::to_string(row);
    require(f.size() == header.size(), where + ": expected " + std::to_string(header.size()) + " fields");
    auto [it, inserted] = index.emplace(f[c_task], tasks.size());
    if (inserted) tasks.push_back({f[c_task], {}});
    tasks[it->second].pairs.push_back({parse_number(f[c_x], where), parse_number(f[c_y], where),
                                       static_cast<int>(parse_number(f[c_n], where))});
  }
  return tasks;
}

int cmd_correlate(const CorrelateArgs& a) {
  RunManifest manifest = start_manifest("correlate");
  const auto tasks = read_pairs_csv(a.input);
  const CorrelationReport report = correlate_tasks(tasks, !a.keep_singletons);

  ensure_parent(a.out);
  emit_report(report, a.out.extension() == ".json" ? ReportFormat::json : ReportFormat::csv, a.out);

  manifest.config = {{"exclude_singletons", !a.keep_singletons}};
  manifest.inputs = {a.input};
  manifest.outputs = {a.out};
  manifest.finished_at = utc_timestamp();
  manifest.write(sibling(a.out, ".manifest.json"));

  std::cout << json{{"average_r", report.average_r},
                    {"tasks", report.per_task.size()},
                    {"skipped", report.skipped},
                    {"excluded_count", report.excluded_count}}
                   .dump()
            << "\n";
  return 0;
}

// ---- bench ----

struct BenchArgs {
  BenchConfig bench;
  TrainConfig train;
  std::string embedding_source = "hidden";
  fs::path out_dir;
  bool save_checkpoints = false;
};

int cmd_bench(BenchArgs a) {
  RunManifest manifest = start_manifest("bench");
  a.bench.embedding_source = parse_embedding_source(a.embedding_source);

  std::error_code ec;
  fs::create_directories(a.out_dir, ec);
  if (ec) fail(ErrorKind::io, "cannot create " + a.out_dir.string() + ": " + ec.message());
  std::optional<fs::path> ckpt_dir;
  if (a.save_checkpoints) ckpt_dir = a.out_dir / "checkpoints";

  const BenchReport report = run_benchmark(a.bench, a.train, ckpt_dir);

  const fs::path report_json = a.out_dir / "report.json";
  const fs::path table = a.out_dir / "table.csv";
  const fs::path plot = a.out_dir / "plot.csv";
  const fs::path summary = a.out_dir / "summary.csv";
  emit_report(report, ReportFormat::json, report_json);
  emit_report(report, ReportFormat::csv, table);
  write_text_atomic(plot, plot_csv(report));
  write_text_atomic(summary, bench_summary_csv(report));
  manifest.outputs = {report_json, table, plot, summary};
  if (report.merged_correlation) {
    const fs::path corr = a.out_dir / "correlation.csv";
    emit_report(*report.merged_correlation, ReportFormat::csv, corr);
    manifest.outputs.push_back(corr);
  }

  json config;
  config["bench"] = a.bench;
  config["train"] = a.train;
  manifest.config = config;
  manifest.finished_at = utc_timestamp();
  manifest.write(a.out_dir / "manifest.json");

  json methods = json::object();
  for (const auto& t : report.targets)
    for (const auto& m : t.methods)
      methods[m.method] = methods.value(m.method, 0.0) + m.test_accuracy / report.targets.size();
  json line{{"out_dir", a.out_dir.string()},
            {"mean_test_accuracy", methods},
            {"best_similarity_metric", report.best_similarity_metric}};
  line["merged_correlation"] =
      report.merged_correlation ? json(report.merged_correlation->average_r) : json(nullptr);
  const auto sim = oriented_similarity_correlation(report, parse_similarity_kind(report.best_similarity_metric));
  line["best_similarity_correlation"] = sim ? json(*sim) : json(nullptr);
  std::cout << line.dump() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  CLI::App app{"Dataset-mixture selection with merged-model surrogates"};
  app.set_version_flag("--version", std::string(kToolVersion));
  app.require_subcommand(1);

  MergeArgs merge;
  auto* c_merge = app.add_subcommand("merge", "Average checkpoints (uniform or weighted)");
  c_merge->add_option("--models", merge.models, "Input checkpoints")->required();
  c_merge->add_option("--out", merge.out, "Output checkpoint")->required();
  c_merge->add_option("--weights", merge.weights, "Comma-separated non-negative weights")->delimiter(',');

  SearchArgs search;
  auto* c_search = app.add_subcommand("search", "Score every mixture's merged model on a target");
  c_search->add_option("--bank", search.bank, "Directory of <index>_<name>.mtm checkpoints")->required();
  c_search->add_option("--target", search.target,
                       "Target dataset file (builtin) or opaque data string (external)")
      ->required();
  c_search->add_option("--evaluator", search.evaluator,
                       "\"builtin\" or a command using {checkpoint} and {data}");
  c_search->add_option("--objective", search.objective, "accuracy or loss");
  c_search->add_option("--out", search.out, "CSV report path; JSON goes next to it")->required();
  c_search->add_option("--jobs", search.jobs, "Worker threads (0 = all cores)");
  c_search->add_option("--max-exhaustive-n", search.max_exhaustive_n, "Largest bank searched exhaustively");
  c_search->add_option("--candidates", search.candidates, "Explicit mixtures to score (bit strings)")
      ->delimiter(',');

  SimilarityArgs sim;
  auto* c_sim = app.add_subcommand("similarity", "Embedding-similarity mixture selection");
  c_sim->add_option("--target", sim.target, "Target embedding file")->required();
  c_sim->add_option("--datasets", sim.datasets, "Candidate embedding files, in bit order")->required();
  c_sim->add_option("--metric", sim.metric, "avg_max_cos, avg_min_l2, avg_avg_cos, avg_avg_l2, "
                                            "max_max_cos or min_min_l2");
  c_sim->add_option("--out", sim.out, "CSV of every mixture's score")->required();

  CorrelateArgs corr;
  auto* c_corr = app.add_subcommand("correlate", "Per-task Pearson correlation of surrogate pairs");
  c_corr->add_option("--input", corr.input, "CSV with columns task,x,y,n_selected")->required();
  c_corr->add_option("--out", corr.out, "Report path (.csv or .json)")->required();
  c_corr->add_flag("--keep-singletons", corr.keep_singletons, "Do not drop n_selected == 1 pairs");

  BenchArgs bench;
  auto* c_bench = app.add_subcommand("bench", "Toy end-to-end comparison of selection methods");
  c_bench->add_option("--seed", bench.bench.seed, "Universe seed");
  c_bench->add_option("--train-seed", bench.train.seed, "Seed for initialization and shuffling");
  c_bench->add_option("--out-dir", bench.out_dir, "Output directory")->required();
  c_bench->add_option("--jobs", bench.bench.jobs, "Worker threads (0 = all cores)");
  c_bench->add_option("--input-dim", bench.bench.input_dim);
  c_bench->add_option("--num-clusters", bench.bench.num_clusters);
  c_bench->add_option("--num-datasets", bench.bench.num_datasets);
  c_bench->add_option("--clusters-per-dataset", bench.bench.clusters_per_dataset);
  c_bench->add_option("--samples-per-dataset", bench.bench.samples_per_dataset);
  c_bench->add_option("--cluster-noise", bench.bench.cluster_noise);
  c_bench->add_option("--num-targets", bench.bench.num_targets);
  c_bench->add_option("--clusters-per-target", bench.bench.clusters_per_target);
  c_bench->add_option("--embedding-source", bench.embedding_source, "hidden or raw");
  c_bench->add_option("--epochs", bench.train.epochs);
  c_bench->add_option("--learning-rate", bench.train.learning_rate);
  c_bench->add_option("--batch-size", bench.train.batch_size);
  c_bench->add_option("--hidden-dim", bench.train.hidden_dim);
  c_bench->add_flag("--save-checkpoints", bench.save_checkpoints,
                    "Write base, bank and mixture models under <out-dir>/checkpoints");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return static_cast<int>(ErrorKind::validation);
  }

  try {
    if (*c_merge) return cmd_merge(merge);
    if (*c_search) return cmd_search(search);
    if (*c_sim) return cmd_similarity(sim);
    if (*c_corr) return cmd_correlate(corr);
    if (*c_bench) return cmd_bench(bench);
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    return e.exit_code();
  } catch (const fs::filesystem_error& e) {
    spdlog::error("{}", e.what());
    return static_cast<int>(ErrorKind::io);
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return static_cast<int>(ErrorKind::validation);
  }
  return 0;
}
