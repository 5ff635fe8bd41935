#include "mergemix/evaluator.hpp"

#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <array>
#include <cerrno>
#include <cmath>
#include <cstring>

#include <nlohmann/json.hpp>

#include "mergemix/error.hpp"
#include "mergemix/mlp.hpp"

extern char** environ;

namespace mergemix {

std::string_view to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "test";
}

Split parse_split(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  fail(ErrorKind::validation, "unknown split \"" + std::string(s) + "\"");
}

void EvalDataset::validate() const {
  require(features.rank() == 2, "dataset " + name + ": features must be rank 2");
  require(num_samples() >= 1, "dataset " + name + " is empty");
  require(features.shape[0] == num_samples(),
          "dataset " + name + ": feature rows do not match label count");
  require(num_classes >= 1, "dataset " + name + ": num_classes must be positive");
  for (int y : labels) require(y >= 0 && y < num_classes, "dataset " + name + ": label out of range");
  require(features.data.allFinite(), "dataset " + name + ": non-finite feature value");
}

void write_dataset(const EvalDataset& data, const std::filesystem::path& path) {
  data.validate();
  Checkpoint ckpt;
  ckpt.tensors.emplace("features", data.features);
  Eigen::VectorXf labels(data.labels.size());
  for (std::size_t i = 0; i < data.labels.size(); ++i) labels[i] = static_cast<float>(data.labels[i]);
  const std::int64_t n = labels.size();
  ckpt.tensors.emplace("labels", Tensor({n}, std::move(labels)));
  ckpt.metadata["name"] = data.name;
  ckpt.metadata["split"] = std::string(to_string(data.split));
  ckpt.metadata["num_classes"] = std::to_string(data.num_classes);
  write_checkpoint(ckpt, path);
}

EvalDataset read_dataset(const std::filesystem::path& path) {
  Checkpoint ckpt = read_checkpoint(path);
  require(ckpt.tensors.contains("features") && ckpt.tensors.contains("labels"),
          path.string() + ": dataset file needs tensors features and labels");
  EvalDataset data;
  data.features = ckpt.at("features");
  const auto& labels = ckpt.at("labels").data;
  data.labels.reserve(labels.size());
  int max_label = -1;
  for (float v : labels) {
    require(v >= 0.0f && v == std::floor(v), path.string() + ": labels must be non-negative integers");
    data.labels.push_back(static_cast<int>(v));
    max_label = std::max(max_label, data.labels.back());
  }
  auto meta = [&](const char* key) -> const std::string* {
    auto it = ckpt.metadata.find(key);
    return it == ckpt.metadata.end() ? nullptr : &it->second;
  };
  data.name = meta("name") ? *meta("name") : path.stem().string();
  data.split = meta("split") ? parse_split(*meta("split")) : Split::test;
  data.num_classes = meta("num_classes") ? std::stoi(*meta("num_classes")) : max_label + 1;
  data.validate();
  return data;
}

Score evaluate_builtin(const Checkpoint& ckpt, const EvalDataset& data) {
  const auto model = Mlp<double>::from_checkpoint(ckpt);
  data.validate();
  require(model.input_dim() == data.input_dim(),
          "model input dimension " + std::to_string(model.input_dim()) +
              " does not match data dimension " + std::to_string(data.input_dim()));
  require(model.num_classes() == data.num_classes,
          "model class count does not match dataset " + data.name);

  const auto x = data.features.matrix();
  constexpr Eigen::Index kChunk = 4096;
  std::int64_t correct = 0;
  double loss = 0.0;
  for (Eigen::Index start = 0; start < x.rows(); start += kChunk) {
    const Eigen::Index rows = std::min(kChunk, x.rows() - start);
    const auto z = model.logits(x.middleRows(start, rows));
    std::span<const int> labels(data.labels.data() + start, rows);
    loss += cross_entropy(z, labels).sum();
    for (Eigen::Index r = 0; r < rows; ++r) {
      Eigen::Index best = 0;
      for (Eigen::Index c = 1; c < z.cols(); ++c)
        if (z(r, c) > z(r, best)) best = c;
      if (best == labels[r]) ++correct;
    }
  }
  const auto n = data.num_samples();
  return {static_cast<double>(correct) / static_cast<double>(n), loss / static_cast<double>(n), n};
}

std::vector<std::string> expand_command(const std::string& command_template,
                                        const std::string& checkpoint,
                                        const std::string& data_ref) {
  require(command_template.find("{checkpoint}") != std::string::npos &&
              command_template.find("{data}") != std::string::npos,
          "evaluator command must contain {checkpoint} and {data}");
  std::vector<std::string> args;
  std::string cur;
  bool in_token = false;
  char quote = 0;
  for (char ch : command_template) {
    if (quote) {
      if (ch == quote) {
        quote = 0;
      } else {
        cur.push_back(ch);
      }
    } else if (ch == '\'' || ch == '"') {
      quote = ch;
      in_token = true;
    } else if (std::isspace(static_cast<unsigned char>(ch))) {
      if (in_token) args.push_back(std::exchange(cur, {}));
      in_token = false;
    } else {
      cur.push_back(ch);
      in_token = true;
    }
  }
  require(quote == 0, "unterminated quote in evaluator command");
  if (in_token) args.push_back(cur);
  require(!args.empty(), "empty evaluator command");

  auto replace_all = [](std::string& s, std::string_view from, const std::string& to) {
    for (std::size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size()))
      s.replace(pos, from.size(), to);
  };
  for (auto& a : args) {
    replace_all(a, "{checkpoint}", checkpoint);
    replace_all(a, "{data}", data_ref);
  }
  return args;
}

Score parse_external_output(std::string_view text) {
  std::string_view last;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    if (line.find_first_not_of(" \t\r") != std::string_view::npos) last = line;
    pos = nl + 1;
  }
  if (last.empty()) fail(ErrorKind::evaluator, "evaluator produced no output");

  nlohmann::json j;
  try {
    j = nlohmann::json::parse(last);
  } catch (const nlohmann::json::exception&) {
    fail(ErrorKind::evaluator, "unparsable evaluator output: " + std::string(last));
  }
  if (!j.is_object() || !j.contains("accuracy") || !j.contains("loss") ||
      !j["accuracy"].is_number() || !j["loss"].is_number()) {
    fail(ErrorKind::evaluator, "unparsable evaluator output: " + std::string(last));
  }
  Score s;
  s.accuracy = j["accuracy"].get<double>();
  s.mean_loss = j["loss"].get<double>();
  if (j.contains("num_samples") && j["num_samples"].is_number_integer())
    s.num_samples = j["num_samples"].get<std::int64_t>();
  if (!(s.accuracy >= 0.0 && s.accuracy <= 1.0)) fail(ErrorKind::evaluator, "accuracy out of range");
  if (!std::isfinite(s.mean_loss) || s.mean_loss < 0.0)
    fail(ErrorKind::evaluator, "loss negative or non-finite");
  return s;
}

Score evaluate_external(const std::filesystem::path& ckpt_path, const std::string& data_ref,
                        const std::string& command_template) {
  const auto args = expand_command(command_template, ckpt_path.string(), data_ref);
  std::vector<char*> argv;
  for (const auto& a : args) argv.push_back(const_cast<char*>(a.c_str()));
  argv.push_back(nullptr);

  std::array<int, 2> fds{};
  if (pipe(fds.data()) != 0) fail(ErrorKind::evaluator, "cannot create pipe for evaluator");
  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_addclose(&actions, fds[0]);
  posix_spawn_file_actions_adddup2(&actions, fds[1], STDOUT_FILENO);
  posix_spawn_file_actions_addclose(&actions, fds[1]);

  pid_t pid = 0;
  const int rc = posix_spawnp(&pid, argv[0], &actions, nullptr, argv.data(), environ);
  posix_spawn_file_actions_destroy(&actions);
  close(fds[1]);
  if (rc != 0) {
    close(fds[0]);
    fail(ErrorKind::evaluator, "evaluator failed: cannot execute " + args[0] + ": " + std::strerror(rc));
  }

  std::string out;
  std::array<char, 4096> buf{};
  for (;;) {
    const ssize_t got = read(fds[0], buf.data(), buf.size());
    if (got > 0) {
      out.append(buf.data(), static_cast<std::size_t>(got));
    } else if (got == 0 || errno != EINTR) {
      break;
    }
  }
  close(fds[0]);

  int status = 0;
  while (waitpid(pid, &status, 0) < 0) {
    if (errno != EINTR) fail(ErrorKind::evaluator, "evaluator failed: waitpid error");
  }
  if (WIFSIGNALED(status))
    fail(ErrorKind::evaluator, "evaluator failed (signal " + std::to_string(WTERMSIG(status)) + ")");
  if (WEXITSTATUS(status) != 0)
    fail(ErrorKind::evaluator, "evaluator failed (exit " + std::to_string(WEXITSTATUS(status)) + ")");
  return parse_external_output(out);
}

double logit(double p) {
  require(p >= 0.0 && p <= 1.0, "logit: probability out of [0, 1]");
  const double q = std::clamp(p, kLogitEpsilon, 1.0 - kLogitEpsilon);
  return std::log(q / (1.0 - q));
}

double logit_improvement(double acc_model, double acc_base) {
  return logit(acc_model) - logit(acc_base);
}

EvalFn builtin_evaluator(const EvalDataset& data) {
  return [&data](const MixtureVector&, const Checkpoint& ckpt) { return evaluate_builtin(ckpt, data); };
}

EvalFn external_evaluator(std::string command_template, std::string data_ref,
                          std::filesystem::path scratch_dir) {
  return [cmd = std::move(command_template), ref = std::move(data_ref),
          dir = std::move(scratch_dir)](const MixtureVector& alpha, const Checkpoint& ckpt) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    const auto path = dir / ("merged_" + alpha.str() + ".mtm");
    write_checkpoint(ckpt, path);
    Score s = evaluate_external(path, ref, cmd);
    std::filesystem::remove(path, ec);
    return s;
  };
}

}  // namespace mergemix
