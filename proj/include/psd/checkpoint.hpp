#pragma once

// Binary checkpoints of a full trainer state.
//
// Layout (little-endian): "PSDCKPT1", version u32, array count u32, then per
// array a u16 name length, the name, a u8 rank, u32 dims and the f64 payload in
// row-major order. A u32-length JSON trailer carries the config, optimiser
// scalars, curriculum state, counters and the RNG state.

#include "psd/trainer.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace psd::ckpt {

inline constexpr std::uint32_t kVersion = 1;

struct NamedArray {
  std::string name;
  std::vector<std::uint32_t> dims;  // rank = dims.size(), 1 or 2
  std::vector<double> data;         // row-major
};

struct Archive {
  std::vector<NamedArray> arrays;
  std::string metadata;  // JSON text
};

std::string encode_archive(const Archive& archive);
/// Throws DataError on a bad magic, unsupported version or truncated input.
Archive decode_archive(const std::string& bytes);

std::string serialize(const train::TrainerState& state);
train::TrainerState deserialize(const std::string& bytes);

/// Writes to a temporary file and renames it over `path`, so an interrupted
/// save never leaves a partial checkpoint behind.
void save(const train::TrainerState& state, const std::filesystem::path& path);
train::TrainerState load(const std::filesystem::path& path);

}  // namespace psd::ckpt
