#pragma once

// DEFC checkpoint format (bit-exact):
//   magic "DEFC" | u32 version=1 | u32 tensor_count
//   per tensor: u32 name_len | name bytes | u32 ndim | u32 dims[] | f32 data
//   trailer: the model config serialized as UTF-8 JSON
// All integers and floats are little-endian. Tensors cover parameters and
// normalization running buffers, so a round trip reproduces eval-mode
// logits bitwise.

#include <cstring>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "edgefilter/errors.hpp"
#include "edgefilter/nn.hpp"

namespace edgefilter {

namespace detail {

struct ByteWriter {
  std::vector<std::uint8_t> bytes;

  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    bytes.insert(bytes.end(), b, b + n);
  }
  void u32(std::uint32_t v) {
    std::uint8_t b[4] = {static_cast<std::uint8_t>(v),
                         static_cast<std::uint8_t>(v >> 8),
                         static_cast<std::uint8_t>(v >> 16),
                         static_cast<std::uint8_t>(v >> 24)};
    raw(b, 4);
  }
  void f32s(const float* v, std::size_t n) {
    static_assert(sizeof(float) == 4);
    raw(v, n * 4);  // little-endian host
  }
};

struct ByteReader {
  const std::uint8_t* p;
  std::size_t n;
  std::size_t off = 0;
  std::string origin;

  void need(std::size_t k) const {
    if (off + k > n)
      throw FormatError(origin + ": truncated at byte offset " +
                        std::to_string(off));
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = std::uint32_t(p[off]) | (std::uint32_t(p[off + 1]) << 8) |
                      (std::uint32_t(p[off + 2]) << 16) |
                      (std::uint32_t(p[off + 3]) << 24);
    off += 4;
    return v;
  }
  std::string str(std::size_t k) {
    need(k);
    std::string s(reinterpret_cast<const char*>(p + off), k);
    off += k;
    return s;
  }
  void f32s(float* dst, std::size_t k) {
    need(k * 4);
    std::memcpy(dst, p + off, k * 4);
    off += k * 4;
  }
};

}  // namespace detail

constexpr std::uint32_t kCheckpointVersion = 1;

inline std::vector<std::uint8_t> serialize_model(Model& model) {
  detail::ByteWriter w;
  w.raw("DEFC", 4);
  w.u32(kCheckpointVersion);
  auto params = model.params();
  auto buffers = model.buffers();
  w.u32(static_cast<std::uint32_t>(params.size() + buffers.size()));
  for (auto& p : params) {
    w.u32(static_cast<std::uint32_t>(p.name.size()));
    w.raw(p.name.data(), p.name.size());
    const auto& shape = p.tensor.shape();
    w.u32(static_cast<std::uint32_t>(shape.size()));
    for (int d : shape) w.u32(static_cast<std::uint32_t>(d));
    w.f32s(p.tensor.data().data(), p.tensor.data().size());
  }
  for (auto& b : buffers) {
    w.u32(static_cast<std::uint32_t>(b.name.size()));
    w.raw(b.name.data(), b.name.size());
    w.u32(1);
    w.u32(static_cast<std::uint32_t>(b.data->size()));
    w.f32s(b.data->data(), b.data->size());
  }
  const std::string trailer = to_json(model.config()).dump();
  w.raw(trailer.data(), trailer.size());
  return std::move(w.bytes);
}

inline std::unique_ptr<Model> deserialize_model(
    const std::vector<std::uint8_t>& bytes, const std::string& origin) {
  detail::ByteReader r{bytes.data(), bytes.size(), 0, origin};
  if (r.str(4) != "DEFC")
    throw FormatError(origin + ": missing DEFC magic");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw FormatError(origin + ": unsupported checkpoint version " +
                      std::to_string(version));
  const std::uint32_t count = r.u32();
  struct Entry {
    std::string name;
    Shape shape;
    std::vector<float> data;
  };
  std::vector<Entry> entries(count);
  for (auto& e : entries) {
    e.name = r.str(r.u32());
    const std::uint32_t ndim = r.u32();
    e.shape.resize(ndim);
    std::size_t numel = 1;
    for (auto& d : e.shape) {
      d = static_cast<int>(r.u32());
      numel *= static_cast<std::size_t>(d);
    }
    e.data.resize(numel);
    r.f32s(e.data.data(), numel);
  }
  const std::string trailer = r.str(r.n - r.off);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(trailer);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(origin + ": bad config trailer: " + e.what());
  }
  auto model = build_model(model_config_from_json(j));

  auto params = model->params();
  auto buffers = model->buffers();
  std::size_t cursor = 0;
  auto next = [&]() -> Entry& {
    if (cursor >= entries.size())
      throw ConfigError(origin + ": checkpoint is missing tensors for this "
                        "config");
    return entries[cursor++];
  };
  for (auto& p : params) {
    Entry& e = next();
    if (e.name != p.name)
      throw ConfigError(origin + ": tensor '" + e.name +
                        "' does not match expected parameter '" + p.name + "'");
    if (e.shape != p.tensor.shape())
      throw ConfigError(origin + ": tensor '" + e.name + "' has shape " +
                        shape_str(e.shape) + ", model expects " +
                        shape_str(p.tensor.shape()));
    p.tensor.data() = std::move(e.data);
  }
  for (auto& b : buffers) {
    Entry& e = next();
    if (e.name != b.name)
      throw ConfigError(origin + ": tensor '" + e.name +
                        "' does not match expected buffer '" + b.name + "'");
    if (e.data.size() != b.data->size())
      throw ConfigError(origin + ": buffer '" + e.name + "' has length " +
                        std::to_string(e.data.size()) + ", model expects " +
                        std::to_string(b.data->size()));
    *b.data = std::move(e.data);
  }
  if (cursor != entries.size())
    throw ConfigError(origin + ": checkpoint holds " +
                      std::to_string(entries.size()) +
                      " tensors, model consumes " + std::to_string(cursor));
  return model;
}

inline void save_checkpoint(Model& model, const std::string& path) {
  auto bytes = serialize_model(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(path + ": cannot open for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

inline std::unique_ptr<Model> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(path + ": cannot open");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return deserialize_model(bytes, path);
}

inline std::unique_ptr<Model> clone_model(Model& model) {
  return deserialize_model(serialize_model(model), "<memory>");
}

}  // namespace edgefilter
