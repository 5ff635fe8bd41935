#include "mergemix/tensor_store.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "mergemix/error.hpp"

namespace mergemix {

static_assert(std::endian::native == std::endian::little,
              "container encoding assumes a little-endian host");

using json = nlohmann::json;

Tensor::Tensor(Shape s, Eigen::VectorXf d) : shape(std::move(s)), data(std::move(d)) {}

Tensor::Tensor(Shape s) : shape(std::move(s)), data(Eigen::VectorXf::Zero(shape_numel(shape))) {}

Eigen::Map<const RowMatrix<float>> Tensor::matrix() const {
  require(shape.size() == 2, "expected a rank-2 tensor, got shape " + shape_string(shape));
  return {data.data(), shape[0], shape[1]};
}

Eigen::Map<RowMatrix<float>> Tensor::matrix() {
  require(shape.size() == 2, "expected a rank-2 tensor, got shape " + shape_string(shape));
  return {data.data(), shape[0], shape[1]};
}

std::int64_t shape_numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

const Tensor& Checkpoint::at(const std::string& name) const {
  auto it = tensors.find(name);
  require(it != tensors.end(), "missing tensor " + name);
  return it->second;
}

Tensor& Checkpoint::at(const std::string& name) {
  auto it = tensors.find(name);
  require(it != tensors.end(), "missing tensor " + name);
  return it->second;
}

std::int64_t Checkpoint::parameter_count() const {
  std::int64_t n = 0;
  for (const auto& [_, t] : tensors) n += t.numel();
  return n;
}

TensorSchema schema_of(const Checkpoint& ckpt) {
  TensorSchema schema;
  for (const auto& [name, t] : ckpt.tensors) schema.emplace(name, t.shape);
  return schema;
}

EmbeddingSet make_embedding_set(RowMatrix<float> rows, std::string source_name) {
  Shape shape{rows.rows(), rows.cols()};
  Eigen::VectorXf flat = Eigen::Map<const Eigen::VectorXf>(rows.data(), rows.size());
  EmbeddingSet set{Tensor(std::move(shape), std::move(flat)), std::move(source_name)};
  check_tensor(kEmbeddingTensorName, set.embeddings, true);
  return set;
}

void check_tensor(const std::string& name, const Tensor& t, bool require_finite) {
  require(!t.shape.empty(), "tensor " + name + " has an empty shape");
  for (auto e : t.shape) {
    require(e > 0, "tensor " + name + " has a non-positive extent in " + shape_string(t.shape));
  }
  require(shape_numel(t.shape) == t.data.size(),
          "tensor " + name + " element count does not match shape " + shape_string(t.shape));
  if (require_finite && !t.data.allFinite()) {
    fail(ErrorKind::validation, "non-finite value in tensor " + name);
  }
}

namespace {

void put_u64_le(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint64_t get_u64_le(std::string_view in) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t(static_cast<unsigned char>(in[i])) << (8 * i);
  return v;
}

struct Entry {
  std::string name;
  Shape shape;
  std::uint64_t begin = 0;
  std::uint64_t end = 0;
};

}  // namespace

std::string encode_checkpoint(const Checkpoint& ckpt) {
  json header = json::object();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : ckpt.tensors) {
    require(name != "__metadata__", "reserved tensor name __metadata__");
    check_tensor(name, t, true);
    const std::uint64_t bytes = std::uint64_t(t.numel()) * sizeof(float);
    header[name] = {{"dtype", "F32"}, {"shape", t.shape}, {"data_offsets", {offset, offset + bytes}}};
    offset += bytes;
  }
  if (!ckpt.metadata.empty()) header["__metadata__"] = ckpt.metadata;

  std::string text = header.dump();
  // Pad so the data region starts 8-byte aligned.
  while ((text.size() % 8) != 0) text.push_back(' ');

  std::string out;
  out.reserve(8 + text.size() + offset);
  put_u64_le(out, text.size());
  out += text;
  for (const auto& [_, t] : ckpt.tensors) {
    out.append(reinterpret_cast<const char*>(t.data.data()), t.data.size() * sizeof(float));
  }
  return out;
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  require(bytes.size() >= 8, "truncated header");
  const std::uint64_t header_len = get_u64_le(bytes.substr(0, 8));
  require(header_len <= bytes.size() - 8, "header length exceeds file size");
  const std::string_view header_text = bytes.substr(8, header_len);
  const std::string_view data = bytes.substr(8 + header_len);

  std::set<std::string> seen;
  bool duplicate = false;
  std::string duplicate_name;
  json::parser_callback_t cb = [&](int depth, json::parse_event_t event, json& parsed) {
    if (depth == 1 && event == json::parse_event_t::key) {
      auto key = parsed.get<std::string>();
      if (!seen.insert(key).second && !duplicate) {
        duplicate = true;
        duplicate_name = key;
      }
    }
    return true;
  };
  json header;
  try {
    header = json::parse(header_text.begin(), header_text.end(), cb);
  } catch (const json::exception& e) {
    fail(ErrorKind::validation, std::string("malformed header: ") + e.what());
  }
  require(!duplicate, "duplicate tensor name " + duplicate_name);
  require(header.is_object(), "malformed header: not a JSON object");

  Checkpoint ckpt;
  std::vector<Entry> entries;
  for (const auto& [name, entry] : header.items()) {
    if (name == "__metadata__") {
      require(entry.is_object(), "malformed header: __metadata__ must be an object");
      for (const auto& [k, v] : entry.items()) {
        require(v.is_string(), "malformed header: metadata values must be strings");
        ckpt.metadata.emplace(k, v.get<std::string>());
      }
      continue;
    }
    require(entry.is_object() && entry.contains("dtype") && entry.contains("shape") &&
                entry.contains("data_offsets"),
            "malformed header entry for " + name);
    const auto dtype = entry["dtype"].get<std::string>();
    require(dtype == "F32", "unknown element type " + dtype + " for tensor " + name);
    Entry e;
    e.name = name;
    try {
      e.shape = entry["shape"].get<Shape>();
      auto offs = entry["data_offsets"].get<std::vector<std::uint64_t>>();
      require(offs.size() == 2, "malformed data_offsets for " + name);
      e.begin = offs[0];
      e.end = offs[1];
    } catch (const json::exception&) {
      fail(ErrorKind::validation, "malformed header entry for " + name);
    }
    require(!e.shape.empty(), "tensor " + name + " has an empty shape");
    for (auto x : e.shape) require(x > 0, "tensor " + name + " has a non-positive extent");
    require(e.end >= e.begin, "inverted data offsets for " + name);
    require(e.end - e.begin == std::uint64_t(shape_numel(e.shape)) * sizeof(float),
            "tensor size mismatch for " + name);
    entries.push_back(std::move(e));
  }

  std::sort(entries.begin(), entries.end(),
            [](const Entry& a, const Entry& b) { return a.begin < b.begin; });
  std::uint64_t cursor = 0;
  for (const auto& e : entries) {
    require(e.begin >= cursor, "overlapping offsets");
    require(e.begin == cursor, "gapped offsets");
    cursor = e.end;
  }
  require(cursor <= data.size(), "truncated data region");
  require(cursor == data.size(), "trailing bytes after data region");

  for (const auto& e : entries) {
    Eigen::VectorXf values(shape_numel(e.shape));
    std::memcpy(values.data(), data.data() + e.begin, e.end - e.begin);
    ckpt.tensors.emplace(e.name, Tensor(e.shape, std::move(values)));
  }
  return ckpt;
}

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const std::string bytes = encode_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::io, "cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorKind::io, "write failed for " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) fail(ErrorKind::io, "read failed for " + path.string());
  try {
    return decode_checkpoint(ss.view());
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
}

TensorSchema validate_bank(std::span<const Checkpoint> ckpts) {
  require(!ckpts.empty(), "empty model bank");
  const TensorSchema schema = schema_of(ckpts.front());
  for (std::size_t i = 1; i < ckpts.size(); ++i) {
    const auto& tensors = ckpts[i].tensors;
    bool same_names = tensors.size() == schema.size() &&
                      std::equal(schema.begin(), schema.end(), tensors.begin(),
                                 [](const auto& a, const auto& b) { return a.first == b.first; });
    require(same_names, "tensor name mismatch between checkpoint 0 and checkpoint " +
                            std::to_string(i));
    for (const auto& [name, shape] : schema) {
      require(tensors.at(name).shape == shape, "shape mismatch at " + name);
    }
  }
  return schema;
}

void write_embeddings(const EmbeddingSet& set, const std::filesystem::path& path) {
  require(set.embeddings.rank() == 2, "embeddings must be rank 2");
  Checkpoint ckpt;
  ckpt.tensors.emplace(kEmbeddingTensorName, set.embeddings);
  if (!set.source_name.empty()) ckpt.metadata["source_name"] = set.source_name;
  write_checkpoint(ckpt, path);
}

EmbeddingSet read_embeddings(const std::filesystem::path& path) {
  Checkpoint ckpt = read_checkpoint(path);
  auto it = ckpt.tensors.find(kEmbeddingTensorName);
  require(it != ckpt.tensors.end() && ckpt.tensors.size() == 1,
          path.string() + ": embedding file must hold exactly one tensor named embeddings");
  require(it->second.rank() == 2, path.string() + ": embeddings must be rank 2");
  require(it->second.data.allFinite(), path.string() + ": non-finite embedding value");
  EmbeddingSet set;
  set.embeddings = std::move(it->second);
  auto name = ckpt.metadata.find("source_name");
  set.source_name = name != ckpt.metadata.end() ? name->second : path.stem().string();
  return set;
}

}  // namespace mergemix
