#pragma once

#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "mergemix/analytics.hpp"
#include "mergemix/baselines.hpp"
#include "mergemix/search.hpp"
#include "mergemix/toy_bench.hpp"

namespace mergemix {

enum class ReportFormat { csv, json };

/// Shortest round-trip decimal form of a double.
std::string format_double(double v);

void to_json(nlohmann::json& j, const MixtureVector& a);
void from_json(const nlohmann::json& j, MixtureVector& a);
void to_json(nlohmann::json& j, const Score& s);
void from_json(const nlohmann::json& j, Score& s);
void to_json(nlohmann::json& j, const ScoreRecord& r);
void from_json(const nlohmann::json& j, ScoreRecord& r);
void to_json(nlohmann::json& j, const SearchReport& r);
void from_json(const nlohmann::json& j, SearchReport& r);
void to_json(nlohmann::json& j, const CorrelationReport& r);
void from_json(const nlohmann::json& j, CorrelationReport& r);
void to_json(nlohmann::json& j, const BenchConfig& c);
void to_json(nlohmann::json& j, const TrainConfig& c);
void to_json(nlohmann::json& j, const BenchReport& r);

/// mixture_bits,n_selected,merged_accuracy,merged_loss,finetuned_accuracy,elapsed_ms
/// (finetuned_accuracy left empty when absent).
std::string search_report_csv(const SearchReport& r);

/// task,r (one row per reported task, then "average" and skipped tasks with an empty r).
std::string correlation_report_csv(const CorrelationReport& r);

/// target,mixture_bits,n_selected,merged_val_accuracy,merged_test_accuracy,
/// merged_test_loss,finetuned_val_accuracy,finetuned_test_accuracy,finetuned_test_loss
std::string bench_table_csv(const BenchReport& r);

/// task,mixture_bits,n_selected,x,y,is_singleton
std::string plot_csv(const BenchReport& r);

/// target,method,mixture_bits,val_accuracy,test_accuracy
std::string bench_summary_csv(const BenchReport& r);

/// mixture_bits,metric,score
std::string similarity_csv(std::span<const MixtureVector> order, std::string_view metric,
                           std::span<const double> scores);

void emit_report(const SearchReport& r, ReportFormat format, const std::filesystem::path& path);
void emit_report(const CorrelationReport& r, ReportFormat format, const std::filesystem::path& path);
/// CSV writes the per-mixture table; JSON writes the full report.
void emit_report(const BenchReport& r, ReportFormat format, const std::filesystem::path& path);

/// Writes via a temporary file and rename so readers never see a partial file.
void write_text_atomic(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace mergemix
