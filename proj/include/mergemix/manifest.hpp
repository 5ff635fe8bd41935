#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace mergemix {

inline constexpr const char* kToolVersion = "0.1.0";

/// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

/// Provenance record written next to every CLI output.
struct RunManifest {
  std::string command;
  nlohmann::json config = nlohmann::json::object();
  std::vector<std::filesystem::path> inputs;
  std::vector<std::filesystem::path> outputs;
  std::string started_at;  // ISO-8601 UTC
  std::string finished_at;

  /// Hashes every input and output file and writes atomically.
  void write(const std::filesystem::path& path) const;
};

std::string utc_timestamp();

}  // namespace mergemix
