#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sremtl/params.hpp"
#include "sremtl/tensor.hpp"

namespace sremtl {

inline constexpr char kCheckpointMagic[8] = {'S', 'R', 'E', 'M', 'T', 'L', '0', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Single-file model snapshot.
///
/// Layout (little-endian): magic "SREMTL01", u32 version, u64 config hash,
/// u32 metadata length + metadata JSON text, u32 tensor count, then per
/// tensor u32 name length, name, u32 rank, rank x u32 dims, f32 values; the
/// file ends with the zlib CRC-32 of every preceding byte.
struct Checkpoint {
  std::uint64_t config_hash = 0;
  std::string metadata;
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor* find(const std::string& name) const;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& checkpoint);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

// Written to a temporary file next to `path` and renamed into place.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

void export_parameters(Checkpoint& checkpoint, const ParameterList& params);
/// Copies checkpoint tensors into the listed parameters by name. A missing
/// name or a shape mismatch is a ParameterError describing both shapes.
void import_parameters(const Checkpoint& checkpoint, const ParameterList& params);

}  // namespace sremtl
