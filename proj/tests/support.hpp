#pragma once

#include <atomic>
#include <cstdio>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <sys/wait.h>
#include <unistd.h>

#include "mergemix/merge.hpp"
#include "mergemix/tensor_store.hpp"

namespace testing {

namespace fs = std::filesystem;

/// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            ("mergemix-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

inline void write_file(const fs::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << bytes;
}

inline std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Executable /bin/sh script.
inline fs::path write_script(const fs::path& p, const std::string& body) {
  write_file(p, "#!/bin/sh\n" + body + "\n");
  fs::permissions(p, fs::perms::owner_all);
  return p;
}

struct ProcessResult {
  int exit_code = -1;
  std::string out;
};

/// Runs a shell command line, capturing stdout; stderr is discarded.
inline ProcessResult run(const std::string& cmdline) {
  ProcessResult r;
  FILE* pipe = ::popen((cmdline + " 2>/dev/null").c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, n);
  const int status = ::pclose(pipe);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

inline mergemix::Tensor vec_tensor(std::vector<float> values) {
  Eigen::VectorXf d = Eigen::Map<Eigen::VectorXf>(values.data(), values.size());
  return {{static_cast<std::int64_t>(values.size())}, d};
}

inline mergemix::Checkpoint single(const std::string& name, mergemix::Tensor t) {
  mergemix::Checkpoint c;
  c.tensors.emplace(name, std::move(t));
  return c;
}

/// Bank of n checkpoints with tensors "a" [3,4] and "b" [5], values in [-scale, scale].
inline mergemix::ModelBank random_bank(std::mt19937_64& gen, int n, float scale = 1.0f) {
  std::uniform_real_distribution<float> u(-scale, scale);
  std::vector<mergemix::Checkpoint> models;
  for (int i = 0; i < n; ++i) {
    mergemix::Checkpoint c;
    Eigen::VectorXf a(12), b(5);
    for (auto& v : a) v = u(gen);
    for (auto& v : b) v = u(gen);
    c.tensors.emplace("a", mergemix::Tensor({3, 4}, a));
    c.tensors.emplace("b", mergemix::Tensor({5}, b));
    models.push_back(std::move(c));
  }
  return mergemix::ModelBank::make(std::move(models));
}

/// Largest |x - y| / max(|y|, 1e-6) over every element of every tensor.
inline double max_rel_diff(const mergemix::Checkpoint& x, const mergemix::Checkpoint& y) {
  double worst = 0.0;
  for (const auto& [name, t] : y.tensors) {
    const auto& o = x.tensors.at(name);
    for (Eigen::Index i = 0; i < t.data.size(); ++i) {
      const double ref = t.data[i];
      const double d = std::abs(double(o.data[i]) - ref) / std::max(std::abs(ref), 1e-6);
      worst = std::max(worst, d);
    }
  }
  return worst;
}

}  // namespace testing
