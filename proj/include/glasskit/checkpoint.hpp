#pragma once

// GLCK checkpoint: "GLCK", u32 version, u32 entry count, then per entry
// u32 name length + UTF-8 name, u32 rank, u32 extents, row-major f32 payload.
// Little-endian throughout. Momentum buffers are stored as "<name>.m".

#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "glasskit/binary_io.hpp"
#include "glasskit/parameters.hpp"

namespace glasskit::nn {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointEntry {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

inline void write_checkpoint_entries(const std::string& path, const std::vector<CheckpointEntry>& entries) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path + " for writing");
  binary::write_magic(os, "GLCK");
  binary::write_u32(os, kCheckpointVersion);
  binary::write_u32(os, static_cast<std::uint32_t>(entries.size()));
  for (const auto& e : entries) {
    binary::write_u32(os, static_cast<std::uint32_t>(e.name.size()));
    os.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    binary::write_u32(os, static_cast<std::uint32_t>(e.shape.size()));
    for (int d : e.shape) binary::write_u32(os, static_cast<std::uint32_t>(d));
    for (float v : e.values) binary::write_f32(os, v);
  }
  if (!os) throw IoError("write failed: " + path);
}

inline std::vector<CheckpointEntry> read_checkpoint_entries(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  try {
    binary::expect_magic(is, "GLCK");
    const auto version = binary::read_u32(is);
    if (version != kCheckpointVersion)
      throw IoError("unsupported checkpoint version " + std::to_string(version));
    const auto count = binary::read_u32(is);
    std::vector<CheckpointEntry> entries;
    for (std::uint32_t i = 0; i < count; ++i) {
      CheckpointEntry e;
      const auto len = binary::read_u32(is);
      if (len > 4096) throw IoError("implausible name length");
      e.name.resize(len);
      if (!is.read(e.name.data(), len)) throw IoError("unexpected end of file");
      const auto rank = binary::read_u32(is);
      if (rank > 8) throw IoError("implausible rank for " + e.name);
      std::size_t n = 1;
      for (std::uint32_t r = 0; r < rank; ++r) {
        e.shape.push_back(static_cast<int>(binary::read_u32(is)));
        n *= static_cast<std::size_t>(e.shape.back());
      }
      if (n > (std::size_t(1) << 28)) throw IoError("implausible size for " + e.name);
      e.values.resize(n);
      for (auto& v : e.values) v = binary::read_f32(is);
      entries.push_back(std::move(e));
    }
    return entries;
  } catch (const IoError& e) {
    throw IoError(path + ": " + e.what());
  }
}

template <class T>
void save_checkpoint(const std::string& path, ParameterStore<T>& store) {
  std::vector<CheckpointEntry> entries;
  auto to_f32 = [](const auto& src) { return std::vector<float>(src.begin(), src.end()); };
  for (const auto& p : store.parameters()) {
    entries.push_back({p.name, p.tensor.shape(), to_f32(p.tensor.values())});
    entries.push_back({p.name + ".m", p.tensor.shape(), to_f32(p.momentum)});
  }
  for (const auto& b : store.buffers())
    entries.push_back({b.name, {static_cast<int>(b.values->size())}, to_f32(*b.values)});
  write_checkpoint_entries(path, entries);
}

/// Loads every parameter, momentum buffer and running statistic; the file must
/// match the store exactly.
template <class T>
void load_checkpoint(const std::string& path, ParameterStore<T>& store) {
  std::map<std::string, CheckpointEntry> by_name;
  for (auto& e : read_checkpoint_entries(path)) {
    auto name = e.name;
    if (!by_name.emplace(name, std::move(e)).second) throw IoError(path + ": duplicate entry " + name);
  }
  std::size_t used = 0;
  auto take = [&](const std::string& name, const Shape& shape) -> const std::vector<float>& {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw IoError(path + ": missing entry " + name);
    if (it->second.shape != shape)
      throw IoError(path + ": entry " + name + " has shape " + to_string(it->second.shape) + ", expected " +
                    to_string(shape));
    ++used;
    return it->second.values;
  };
  for (auto& p : store.parameters()) {
    const auto& w = take(p.name, p.tensor.shape());
    std::copy(w.begin(), w.end(), p.tensor.mutable_values().begin());
    const auto& m = take(p.name + ".m", p.tensor.shape());
    std::copy(m.begin(), m.end(), p.momentum.begin());
    p.tensor.zero_grad();
  }
  for (auto& b : store.buffers()) {
    const auto& v = take(b.name, {static_cast<int>(b.values->size())});
    std::copy(v.begin(), v.end(), b.values->begin());
  }
  if (used != by_name.size())
    throw IoError(path + ": " + std::to_string(by_name.size() - used) + " entries do not belong to this network");
}

}  // namespace glasskit::nn
