#pragma once

#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "revdistill/core/errors.hpp"
#include "revdistill/core/sha256.hpp"
#include "revdistill/core/tensor.hpp"

namespace revdistill::io {

// Container for named float32 tensors plus a JSON metadata record. The
// metadata is stored as plain UTF-8 right after the magic, so a checkpoint
// can be inspected with `head -c`. Tensor payloads are little-endian float32.
//
// Layout:
//   8 bytes   magic "RDTNSR1\n"
//   8 bytes   u64 LE: metadata length
//   N bytes   metadata JSON text
//   8 bytes   u64 LE: tensor count
//   per tensor:
//     4 bytes u32 LE name length, name bytes,
//     4 bytes u32 LE ndim, ndim * 8 bytes i64 LE dims,
//     numel * 4 bytes f32 LE data
struct TensorFile {
  nlohmann::json meta;
  std::map<std::string, Tensor<float>> tensors;

  static constexpr char kMagic[8] = {'R', 'D', 'T', 'N', 'S', 'R', '1', '\n'};

  void write(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open for writing: " + path);
    os.write(kMagic, 8);
    const std::string meta_text = meta.dump(2);
    write_u64(os, meta_text.size());
    os.write(meta_text.data(), static_cast<std::streamsize>(meta_text.size()));
    write_u64(os, tensors.size());
    for (const auto& [name, t] : tensors) {
      write_u32(os, static_cast<uint32_t>(name.size()));
      os.write(name.data(), static_cast<std::streamsize>(name.size()));
      write_u32(os, static_cast<uint32_t>(t.ndim()));
      for (int i = 0; i < t.ndim(); ++i) write_i64(os, t.dim(i));
      os.write(reinterpret_cast<const char*>(t.data()),
               static_cast<std::streamsize>(t.numel() * 4));
    }
    if (!os) throw DataError("write failed: " + path);
  }

  static TensorFile read(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open: " + path);
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kMagic, 8) != 0) {
      throw DataError("not a tensor container: " + path);
    }
    TensorFile f;
    const uint64_t meta_len = read_u64(is);
    std::string meta_text(meta_len, '\0');
    is.read(meta_text.data(), static_cast<std::streamsize>(meta_len));
    f.meta = nlohmann::json::parse(meta_text);
    const uint64_t count = read_u64(is);
    for (uint64_t i = 0; i < count; ++i) {
      const uint32_t name_len = read_u32(is);
      std::string name(name_len, '\0');
      is.read(name.data(), name_len);
      const uint32_t ndim = read_u32(is);
      std::vector<int64_t> dims(ndim);
      for (uint32_t d = 0; d < ndim; ++d) dims[d] = read_i64(is);
      Tensor<float> t(dims);
      is.read(reinterpret_cast<char*>(t.data()),
              static_cast<std::streamsize>(t.numel() * 4));
      if (!is) throw DataError("truncated tensor container: " + path);
      f.tensors.emplace(std::move(name), std::move(t));
    }
    return f;
  }

 private:
  static void write_u64(std::ofstream& os, uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>(v >> (8 * i));
    os.write(b, 8);
  }
  static void write_u32(std::ofstream& os, uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>(v >> (8 * i));
    os.write(b, 4);
  }
  static void write_i64(std::ofstream& os, int64_t v) {
    write_u64(os, static_cast<uint64_t>(v));
  }
  static uint64_t read_u64(std::ifstream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
    return v;
  }
  static uint32_t read_u32(std::ifstream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
    return v;
  }
  static int64_t read_i64(std::ifstream& is) { return static_cast<int64_t>(read_u64(is)); }
};

// Canonical fingerprint of a set of named tensors: SHA-256 over
// name/shape/float32 payload in name order.
template <typename T>
inline std::string digest_state(const std::map<std::string, Tensor<T>*>& state) {
  Sha256 h;
  for (const auto& [name, tensor] : state) {
    h.update(name.data(), name.size());
    for (int i = 0; i < tensor->ndim(); ++i) {
      const int64_t d = tensor->dim(i);
      h.update(&d, sizeof(d));
    }
    if constexpr (std::is_same_v<T, float>) {
      h.update(tensor->data(), static_cast<size_t>(tensor->numel()) * 4);
    } else {
      for (int64_t i = 0; i < tensor->numel(); ++i) {
        const float v = static_cast<float>((*tensor)[i]);
        h.update(&v, 4);
      }
    }
  }
  return h.hex();
}

}  // namespace revdistill::io
