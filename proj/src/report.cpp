#include "mergemix/report.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "mergemix/error.hpp"

namespace mergemix {

using json = nlohmann::json;

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

void to_json(json& j, const MixtureVector& a) { j = a.str(); }
void from_json(const json& j, MixtureVector& a) { a = MixtureVector::parse(j.get<std::string>()); }

void to_json(json& j, const Score& s) {
  j = {{"accuracy", s.accuracy}, {"mean_loss", s.mean_loss}, {"num_samples", s.num_samples}};
}
void from_json(const json& j, Score& s) {
  s.accuracy = j.at("accuracy").get<double>();
  s.mean_loss = j.at("mean_loss").get<double>();
  s.num_samples = j.at("num_samples").get<std::int64_t>();
}

void to_json(json& j, const ScoreRecord& r) {
  j = {{"alpha", r.alpha}, {"merged_score", r.merged_score}, {"elapsed_ms", r.elapsed_ms}};
  j["finetuned_score"] = r.finetuned_score ? json(*r.finetuned_score) : json(nullptr);
}
void from_json(const json& j, ScoreRecord& r) {
  r.alpha = j.at("alpha").get<MixtureVector>();
  r.merged_score = j.at("merged_score").get<Score>();
  r.elapsed_ms = j.at("elapsed_ms").get<std::int64_t>();
  const auto& ft = j.at("finetuned_score");
  r.finetuned_score = ft.is_null() ? std::nullopt : std::optional<Score>(ft.get<Score>());
}

void to_json(json& j, const SearchReport& r) {
  j = {{"target_name", r.target_name},
       {"objective", to_string(r.objective)},
       {"best_alpha", r.best_alpha},
       {"records", r.records}};
}
void from_json(const json& j, SearchReport& r) {
  r.target_name = j.at("target_name").get<std::string>();
  r.objective = parse_objective(j.at("objective").get<std::string>());
  r.best_alpha = j.at("best_alpha").get<MixtureVector>();
  r.records = j.at("records").get<std::vector<ScoreRecord>>();
}

void to_json(json& j, const CorrelationReport& r) {
  j = {{"per_task", r.per_task},
       {"average_r", r.average_r},
       {"excluded_count", r.excluded_count},
       {"skipped", r.skipped}};
}
void from_json(const json& j, CorrelationReport& r) {
  r.per_task = j.at("per_task").get<std::map<std::string, double>>();
  r.average_r = j.at("average_r").get<double>();
  r.excluded_count = j.at("excluded_count").get<std::int64_t>();
  r.skipped = j.at("skipped").get<std::vector<std::string>>();
}

void to_json(json& j, const BenchConfig& c) {
  j = {{"input_dim", c.input_dim},
       {"num_clusters", c.num_clusters},
       {"num_datasets", c.num_datasets},
       {"clusters_per_dataset", c.clusters_per_dataset},
       {"samples_per_dataset", c.samples_per_dataset},
       {"cluster_noise", c.cluster_noise},
       {"num_targets", c.num_targets},
       {"clusters_per_target", c.clusters_per_target},
       {"seed", c.seed},
       {"embedding_source", to_string(c.embedding_source)}};
}

void to_json(json& j, const TrainConfig& c) {
  j = {{"epochs", c.epochs},
       {"learning_rate", c.learning_rate},
       {"batch_size", c.batch_size},
       {"hidden_dim", c.hidden_dim},
       {"seed", c.seed}};
}

namespace {

json method_json(const MethodResult& m) {
  return {{"method", m.method},
          {"alpha", m.alpha ? json(*m.alpha) : json(nullptr)},
          {"val_accuracy", m.val_accuracy},
          {"test_accuracy", m.test_accuracy}};
}

json optional_correlation(const std::optional<CorrelationReport>& c) {
  return c ? json(*c) : json(nullptr);
}

}  // namespace

void to_json(json& j, const BenchReport& r) {
  json targets = json::array();
  for (const auto& t : r.targets) {
    json rows = json::array();
    for (const auto& row : t.rows) {
      rows.push_back({{"alpha", row.alpha},
                      {"merged_val", row.merged_val},
                      {"merged_test", row.merged_test},
                      {"finetuned_val", row.finetuned_val},
                      {"finetuned_test", row.finetuned_test}});
    }
    json methods = json::array();
    for (const auto& m : t.methods) methods.push_back(method_json(m));
    json similarity = json::object();
    for (const auto& [k, m] : t.similarity) similarity[k] = method_json(m);
    // elapsed_ms is wall-clock and would break byte-reproducibility.
    json search = {{"objective", to_string(t.search.objective)}, {"best_alpha", t.search.best_alpha}};
    targets.push_back({{"name", t.name},
                       {"clusters", t.clusters},
                       {"base_val", t.base_val},
                       {"base_test", t.base_test},
                       {"merge_to_mix_search", search},
                       {"methods", methods},
                       {"similarity_selections", similarity},
                       {"rows", rows}});
  }
  json sim_corr = json::object();
  for (const auto& [k, c] : r.similarity_correlation) sim_corr[k] = c;
  j = {{"bench_config", r.bench},
       {"train_config", r.train},
       {"dataset_names", r.dataset_names},
       {"best_similarity_metric", r.best_similarity_metric},
       {"merged_correlation", optional_correlation(r.merged_correlation)},
       {"merged_logit_correlation", optional_correlation(r.merged_logit_correlation)},
       {"similarity_correlation", sim_corr},
       {"targets", targets}};
}

std::string search_report_csv(const SearchReport& r) {
  std::string out = "mixture_bits,n_selected,merged_accuracy,merged_loss,finetuned_accuracy,elapsed_ms\n";
  for (const auto& rec : r.records) {
    out += rec.alpha.str() + "," + std::to_string(rec.alpha.count()) + "," +
           format_double(rec.merged_score.accuracy) + "," + format_double(rec.merged_score.mean_loss) + "," +
           (rec.finetuned_score ? format_double(rec.finetuned_score->accuracy) : std::string()) + "," +
           std::to_string(rec.elapsed_ms) + "\n";
  }
  return out;
}

std::string correlation_report_csv(const CorrelationReport& r) {
  std::string out = "task,r\n";
  for (const auto& [task, v] : r.per_task) out += task + "," + format_double(v) + "\n";
  for (const auto& task : r.skipped) out += task + ",\n";
  out += "average," + format_double(r.average_r) + "\n";
  return out;
}

std::string bench_table_csv(const BenchReport& r) {
  std::string out =
      "target,mixture_bits,n_selected,merged_val_accuracy,merged_test_accuracy,merged_test_loss,"
      "finetuned_val_accuracy,finetuned_test_accuracy,finetuned_test_loss\n";
  for (const auto& t : r.targets) {
    for (const auto& row : t.rows) {
      out += t.name + "," + row.alpha.str() + "," + std::to_string(row.alpha.count()) + "," +
             format_double(row.merged_val.accuracy) + "," + format_double(row.merged_test.accuracy) + "," +
             format_double(row.merged_test.mean_loss) + "," + format_double(row.finetuned_val.accuracy) +
             "," + format_double(row.finetuned_test.accuracy) + "," +
             format_double(row.finetuned_test.mean_loss) + "\n";
    }
  }
  return out;
}

std::string plot_csv(const BenchReport& r) {
  std::string out = "task,mixture_bits,n_selected,x,y,is_singleton\n";
  for (const auto& t : r.targets) {
    for (const auto& p : t.plot) {
      out += t.name + "," + p.alpha.str() + "," + std::to_string(p.n_selected) + "," + format_double(p.x) +
             "," + format_double(p.y) + "," + (p.is_singleton ? "1" : "0") + "\n";
    }
  }
  return out;
}

std::string bench_summary_csv(const BenchReport& r) {
  std::string out = "target,method,mixture_bits,val_accuracy,test_accuracy\n";
  for (const auto& t : r.targets) {
    for (const auto& m : t.methods) {
      out += t.name + "," + m.method + "," + (m.alpha ? m.alpha->str() : std::string()) + "," +
             format_double(m.val_accuracy) + "," + format_double(m.test_accuracy) + "\n";
    }
  }
  return out;
}

std::string similarity_csv(std::span<const MixtureVector> order, std::string_view metric,
                           std::span<const double> scores) {
  require(order.size() == scores.size(), "similarity_csv: size mismatch");
  std::string out = "mixture_bits,metric,score\n";
  for (std::size_t i = 0; i < order.size(); ++i)
    out += order[i].str() + "," + std::string(metric) + "," + format_double(scores[i]) + "\n";
  return out;
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::io, "cannot open " + tmp.string() + " for writing");
    out << text;
    if (!out) fail(ErrorKind::io, "write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) fail(ErrorKind::io, "cannot rename " + tmp.string() + ": " + ec.message());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void emit_report(const SearchReport& r, ReportFormat format, const std::filesystem::path& path) {
  write_text_atomic(path, format == ReportFormat::csv ? search_report_csv(r) : json(r).dump(2) + "\n");
}

void emit_report(const CorrelationReport& r, ReportFormat format, const std::filesystem::path& path) {
  write_text_atomic(path, format == ReportFormat::csv ? correlation_report_csv(r) : json(r).dump(2) + "\n");
}

void emit_report(const BenchReport& r, ReportFormat format, const std::filesystem::path& path) {
  write_text_atomic(path, format == ReportFormat::csv ? bench_table_csv(r) : json(r).dump(2) + "\n");
}

}  // namespace mergemix
