#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "eot/common.hpp"
#include "eot/module.hpp"
#include "eot/tensor.hpp"

namespace eot {

// Binary container for named float tensors plus a small string manifest.
// Serialization order follows insertion order, so writing the same state
// twice produces identical bytes.
struct TensorStore {
  std::vector<std::pair<std::string, std::string>> meta;
  std::vector<std::pair<std::string, Tensor<float>>> tensors;

  static constexpr std::uint32_t kMagic = 0x45304254;  // "TB0E" little-endian
  static constexpr std::uint32_t kVersion = 1;

  const std::string* find_meta(const std::string& key) const {
    for (const auto& [k, v] : meta)
      if (k == key) return &v;
    return nullptr;
  }

  const Tensor<float>* find(const std::string& name) const {
    for (const auto& [n, t] : tensors)
      if (n == name) return &t;
    return nullptr;
  }

  void save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    require<IoError>(static_cast<bool>(os), "cannot open ", path, " for writing");
    write_u32(os, kMagic);
    write_u32(os, kVersion);
    write_u32(os, static_cast<std::uint32_t>(meta.size()));
    for (const auto& [k, v] : meta) {
      write_string(os, k);
      write_string(os, v);
    }
    write_u64(os, tensors.size());
    for (const auto& [name, t] : tensors) {
      write_string(os, name);
      write_u32(os, static_cast<std::uint32_t>(t.rank()));
      for (std::size_t d = 0; d < t.rank(); ++d) write_u64(os, t.dim(d));
      os.write(reinterpret_cast<const char*>(t.data()),
               static_cast<std::streamsize>(t.size() * sizeof(float)));
    }
    require<IoError>(static_cast<bool>(os), "write failed for ", path);
  }

  static TensorStore load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    require<LoadError>(static_cast<bool>(is), "cannot open ", path);
    TensorStore store;
    require<LoadError>(read_u32(is) == kMagic, path, ": not a tensor container");
    const std::uint32_t version = read_u32(is);
    require<LoadError>(version == kVersion, path, ": unsupported container version ", version);
    const std::uint32_t nmeta = read_u32(is);
    for (std::uint32_t i = 0; i < nmeta; ++i) {
      std::string k = read_string(is, path);
      std::string v = read_string(is, path);
      store.meta.emplace_back(std::move(k), std::move(v));
    }
    const std::uint64_t ntensors = read_u64(is);
    for (std::uint64_t i = 0; i < ntensors; ++i) {
      std::string name = read_string(is, path);
      const std::uint32_t rank = read_u32(is);
      require<LoadError>(rank <= 8, path, ": corrupt tensor rank");
      Shape shape(rank);
      for (std::uint32_t d = 0; d < rank; ++d) shape[d] = read_u64(is);
      Tensor<float> t(shape);
      is.read(reinterpret_cast<char*>(t.data()),
              static_cast<std::streamsize>(t.size() * sizeof(float)));
      require<LoadError>(static_cast<bool>(is), path, ": truncated tensor data");
      store.tensors.emplace_back(std::move(name), std::move(t));
    }
    return store;
  }

 private:
  static void write_u32(std::ostream& os, std::uint32_t v) {
    os.write(reinterpret_cast<const char*>(&v), 4);
  }
  static void write_u64(std::ostream& os, std::uint64_t v) {
    os.write(reinterpret_cast<const char*>(&v), 8);
  }
  static void write_string(std::ostream& os, const std::string& s) {
    write_u32(os, static_cast<std::uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  static std::uint32_t read_u32(std::istream& is) {
    std::uint32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), 4);
    return v;
  }
  static std::uint64_t read_u64(std::istream& is) {
    std::uint64_t v = 0;
    is.read(reinterpret_cast<char*>(&v), 8);
    return v;
  }
  static std::string read_string(std::istream& is, const std::string& path) {
    const std::uint32_t n = read_u32(is);
    require<LoadError>(static_cast<bool>(is) && n < (1u << 20), path, ": corrupt string field");
    std::string s(n, '\0');
    is.read(s.data(), n);
    require<LoadError>(static_cast<bool>(is), path, ": truncated string field");
    return s;
  }
};

// Snapshot of a module's parameters and buffers, in registration order.
inline TensorStore snapshot_module(Module<float>& m) {
  TensorStore store;
  for (Parameter<float>* p : m.parameters()) store.tensors.emplace_back(p->name, p->value);
  for (const NamedBuffer<float>& b : m.buffers()) store.tensors.emplace_back(b.name, *b.tensor);
  return store;
}

// Restores parameters and buffers by name; every module tensor must be
// present with a matching shape.
inline void restore_module(const TensorStore& store, Module<float>& m) {
  auto assign = [&](const std::string& name, Tensor<float>& dst) {
    const Tensor<float>* src = store.find(name);
    require<LoadError>(src != nullptr, "missing tensor '", name, "' in container");
    require<LoadError>(src->shape() == dst.shape(), "tensor '", name, "': stored shape ",
                       shape_str(src->shape()), " != model shape ", shape_str(dst.shape()));
    dst = *src;
  };
  for (Parameter<float>* p : m.parameters()) assign(p->name, p->value);
  for (const NamedBuffer<float>& b : m.buffers()) assign(b.name, *b.tensor);
}

}  // namespace eot
