#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

#include "sdplm/errors.hpp"
#include "sdplm/model.hpp"

// Checkpoint container, version 1:
//   "SDPL" | u32 version | u64 config-json length | config JSON bytes |
//   u32 array count | per array: u32 name length | name | u32 ndim |
//   u64 dims... | float64 data
// All integers and floats little-endian.

namespace sdplm {
namespace {

constexpr char kMagic[4] = {'S', 'D', 'P', 'L'};
constexpr uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ofstream& f, T v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& f) {
  T v{};
  f.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!f) throw FormatError("checkpoint: truncated file");
  return v;
}

struct NamedArray {
  const char* name;
  std::span<const double> data;
  std::vector<uint64_t> dims;
};

}  // namespace

void save_checkpoint(const ModelState& state, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("checkpoint: cannot write " + path);

  const ModelConfig& cfg = state.config;
  const Parameters& p = state.params;
  const uint64_t h = static_cast<uint64_t>(cfg.hidden_dim);
  const uint64_t e = static_cast<uint64_t>(cfg.embedding_dim);
  const uint64_t v = static_cast<uint64_t>(cfg.vocab_size);
  std::vector<NamedArray> arrays = {
      {"embedding", p.embedding.a, {v, e}},
      {"lstm_wx", p.lstm_wx.a, {4 * h, e}},
      {"lstm_wh", p.lstm_wh.a, {4 * h, h}},
      {"lstm_b", p.lstm_b, {4 * h}},
  };
  if (!p.tied) arrays.push_back({"out_w", p.out_w.a, {v, h}});
  arrays.push_back({"out_b", p.out_b, {v}});

  f.write(kMagic, 4);
  write_pod(f, kVersion);
  const std::string cfg_json = cfg.to_json();
  write_pod(f, static_cast<uint64_t>(cfg_json.size()));
  f.write(cfg_json.data(), static_cast<std::streamsize>(cfg_json.size()));
  write_pod(f, static_cast<uint32_t>(arrays.size()));
  for (const auto& arr : arrays) {
    const uint32_t name_len = static_cast<uint32_t>(std::strlen(arr.name));
    write_pod(f, name_len);
    f.write(arr.name, name_len);
    write_pod(f, static_cast<uint32_t>(arr.dims.size()));
    uint64_t n = 1;
    for (uint64_t d : arr.dims) {
      write_pod(f, d);
      n *= d;
    }
    if (n != arr.data.size()) throw ShapeError("checkpoint: shape mismatch");
    f.write(reinterpret_cast<const char*>(arr.data.data()),
            static_cast<std::streamsize>(n * sizeof(double)));
  }
  if (!f) throw DataError("checkpoint: write failed for " + path);
}

ModelState load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("checkpoint: cannot read " + path);

  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, kMagic, 4) != 0) {
    throw FormatError("checkpoint: bad magic, not a checkpoint file");
  }
  const uint32_t version = read_pod<uint32_t>(f);
  if (version != kVersion) {
    throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  }
  const uint64_t cfg_len = read_pod<uint64_t>(f);
  if (cfg_len > (1u << 20)) throw FormatError("checkpoint: oversized header");
  std::string cfg_json(cfg_len, '\0');
  f.read(cfg_json.data(), static_cast<std::streamsize>(cfg_len));
  if (!f) throw FormatError("checkpoint: truncated file");

  ModelState state;
  state.config = ModelConfig::from_json(cfg_json);
  state.params = Parameters::shaped(state.config);

  const uint32_t n_arrays = read_pod<uint32_t>(f);
  for (uint32_t i = 0; i < n_arrays; ++i) {
    const uint32_t name_len = read_pod<uint32_t>(f);
    if (name_len > 256) throw FormatError("checkpoint: oversized array name");
    std::string name(name_len, '\0');
    f.read(name.data(), name_len);
    const uint32_t ndim = read_pod<uint32_t>(f);
    if (ndim > 8) throw FormatError("checkpoint: oversized rank");
    uint64_t n = 1;
    for (uint32_t d = 0; d < ndim; ++d) n *= read_pod<uint64_t>(f);

    std::span<double> dst;
    state.params.for_each_array([&](const char* arr_name, std::span<double> a) {
      if (name == arr_name) dst = a;
    });
    if (dst.empty() && n > 0) {
      throw FormatError("checkpoint: unknown array '" + name + "'");
    }
    if (dst.size() != n) {
      throw ShapeError("checkpoint: array '" + name +
                       "' does not match the stored config");
    }
    f.read(reinterpret_cast<char*>(dst.data()),
           static_cast<std::streamsize>(n * sizeof(double)));
    if (!f) throw FormatError("checkpoint: truncated file");
  }
  return state;
}

}  // namespace sdplm
