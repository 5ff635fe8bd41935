#include "mergemix/manifest.hpp"

#include <openssl/evp.h>

#include <array>
#include <chrono>
#include <ctime>
#include <fstream>
#include <memory>

#include "mergemix/error.hpp"
#include "mergemix/report.hpp"

namespace mergemix {

namespace {

struct DigestCtx {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx{EVP_MD_CTX_new(), &EVP_MD_CTX_free};

  DigestCtx() {
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1)
      fail(ErrorKind::io, "sha256: digest init failed");
  }
  void update(const void* data, std::size_t n) { EVP_DigestUpdate(ctx.get(), data, n); }
  std::string hex() {
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx.get(), md.data(), &len);
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    for (unsigned i = 0; i < len; ++i) {
      out.push_back(kHex[md[i] >> 4]);
      out.push_back(kHex[md[i] & 0xF]);
    }
    return out;
  }
};

}  // namespace

std::string sha256_hex(std::string_view bytes) {
  DigestCtx d;
  d.update(bytes.data(), bytes.size());
  return d.hex();
}

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot open " + path.string());
  DigestCtx d;
  std::array<char, 1 << 16> buf{};
  while (in) {
    in.read(buf.data(), buf.size());
    d.update(buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  return d.hex();
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void RunManifest::write(const std::filesystem::path& path) const {
  auto digests = [](const std::vector<std::filesystem::path>& files) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& f : files) {
      nlohmann::json entry = {{"path", f.string()}};
      entry["sha256"] = std::filesystem::is_regular_file(f) ? nlohmann::json(sha256_file(f)) : nlohmann::json(nullptr);
      arr.push_back(std::move(entry));
    }
    return arr;
  };
  nlohmann::json j = {{"tool", "mergemix"},
                      {"version", kToolVersion},
                      {"command", command},
                      {"config", config},
                      {"inputs", digests(inputs)},
                      {"outputs", digests(outputs)},
                      {"started_at", started_at},
                      {"finished_at", finished_at}};
  write_text_atomic(path, j.dump(2) + "\n");
}

}  // namespace mergemix
