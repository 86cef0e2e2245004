#pragma once

// Versioned binary checkpoint container.
//
// Layout (little endian):
//   "MASKVCCK"  u32 format_version  u64 config_hash  u32 section_count
//   section_count x { u32 name_len, name, u8 kind, u64 count, payload }
// kind 0: f32 array, 1: f64 array, 2: i64 array, 3: utf-8 text.
// Loading checks the magic, version and the hash of the stored config
// against the caller's config.

#include <cstdint>
#include <filesystem>
#include <string>

#include "maskvc/mel.hpp"
#include "maskvc/trainer.hpp"

namespace maskvc {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  TrainConfig config;
  TrainState state;
  NormStats stats_x;
  NormStats stats_y;
  StftConfig stft;
};

// Written to a temporary sibling and renamed into place.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);

// Throws Error(kFormat) for a malformed container and Error(kCheckpoint)
// when `expected` hashes differently from the stored config and `force` is
// false. With force the caller's config replaces the stored one; array sizes
// must still match the networks it describes.
Checkpoint load_checkpoint(const std::filesystem::path& path,
                           const TrainConfig* expected = nullptr, bool force = false);

// Human-readable summary: version, hash, iteration, parameter counts, config.
std::string describe_checkpoint(const Checkpoint& ck);

}  // namespace maskvc
