#pragma once

// Model checkpoint container. Layout (all integers and floats little-endian):
//
//   8 bytes   magic "MILABCKP"
//   u32       format version (kCheckpointVersion)
//   u64       length L of the header JSON
//   L bytes   header JSON: {"model": <MilConfig>, "provenance": {...}}
//   u32       parameter count P
//   P times:  u32 name length, name bytes (UTF-8),
//             u32 rank, rank x u64 dims,
//             prod(dims) x f64 values (row-major)
//   u64       FNV-1a 64 checksum of every preceding byte
//
// docs/checkpoint_format.md carries the same description.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "milab/json_util.hpp"
#include "milab/model.hpp"

namespace milab {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  MilModel model;
  Json provenance;
};

std::string encode_checkpoint(const MilModel& model, const Json& provenance);
// Throws VersionError for a foreign magic/version, ParseError for a damaged
// container.
Checkpoint decode_checkpoint(std::string_view bytes);

Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace milab
