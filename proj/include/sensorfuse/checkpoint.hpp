#pragma once

// Flat binary parameter checkpoint (all integers little-endian):
//
//   8 bytes  magic "SFUSCKPT"
//   u32      format version (1)
//   u32      metadata length, then metadata bytes (model config as JSON)
//   u32      tensor count
//   per tensor: u32 name length, name bytes, u32 rows, u32 cols,
//               rows * cols IEEE-754 float64 values (row-major)

#include <filesystem>
#include <string>

#include "sensorfuse/model.hpp"

namespace sensorfuse::checkpoint {

inline constexpr std::uint32_t kVersion = 1;

std::string serialize(const model::Model& model);
/// Rebuilds the model from the embedded config and restores every tensor.
/// Throws IoError on a malformed file or a name/shape mismatch.
model::Model deserialize(const std::string& bytes);

void save(const std::filesystem::path& path, const model::Model& model);
model::Model load(const std::filesystem::path& path);

}  // namespace sensorfuse::checkpoint
