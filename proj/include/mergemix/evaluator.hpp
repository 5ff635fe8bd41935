#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "mergemix/mixture.hpp"
#include "mergemix/tensor_store.hpp"

namespace mergemix {

enum class Split { train, val, test };

std::string_view to_string(Split s);
Split parse_split(std::string_view s);

/// Labeled classification data for training or scoring.
struct EvalDataset {
  Tensor features;          // [num_samples, input_dim]
  std::vector<int> labels;  // in [0, num_classes)
  int num_classes = 0;
  std::string name;
  Split split = Split::test;

  std::int64_t num_samples() const { return static_cast<std::int64_t>(labels.size()); }
  std::int64_t input_dim() const { return features.shape.at(1); }

  /// Throws on empty data, out-of-range labels or non-finite features.
  void validate() const;
};

/// Datasets live in the same container: "features" [n, d] and "labels" [n]
/// (class indices stored as float32), with name/split/num_classes metadata.
void write_dataset(const EvalDataset& data, const std::filesystem::path& path);
EvalDataset read_dataset(const std::filesystem::path& path);

struct Score {
  double accuracy = 0.0;
  double mean_loss = 0.0;
  std::int64_t num_samples = 0;

  friend bool operator==(const Score&, const Score&) = default;
};

/// Forward pass of the toy MLP. Argmax ties resolve to the lowest class.
Score evaluate_builtin(const Checkpoint& ckpt, const EvalDataset& data);

/// Runs an external scorer. The template is split into arguments on
/// whitespace (single and double quotes group), "{checkpoint}" and "{data}"
/// are substituted inside each argument and the program is executed
/// directly, without a shell. The last non-empty stdout line must be
/// {"accuracy": <float>, "loss": <float>}.
Score evaluate_external(const std::filesystem::path& ckpt_path, const std::string& data_ref,
                        const std::string& command_template);

/// Argument vector after placeholder substitution (exposed for testing).
std::vector<std::string> expand_command(const std::string& command_template,
                                        const std::string& checkpoint,
                                        const std::string& data_ref);

/// Parses the scorer's output into a Score, enforcing the protocol ranges.
Score parse_external_output(std::string_view stdout_text);

inline constexpr double kLogitEpsilon = 1e-6;

/// log(p / (1 - p)) after clamping p to [eps, 1 - eps].
double logit(double p);
double logit_improvement(double acc_model, double acc_base);

/// Scores one merged checkpoint for one mixture.
using EvalFn = std::function<Score(const MixtureVector&, const Checkpoint&)>;

EvalFn builtin_evaluator(const EvalDataset& data);

/// Writes each candidate to scratch_dir and calls evaluate_external.
EvalFn external_evaluator(std::string command_template, std::string data_ref,
                          std::filesystem::path scratch_dir);

}  // namespace mergemix
