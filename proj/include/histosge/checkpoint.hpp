#pragma once

// Checkpoint container, little endian throughout:
//   "HSGECKPT" | u32 version | u32 reserved | u64 training step
//   u32 len | model config (canonical key=value text)
//   32 bytes  SHA-256 of the config text
//   u32 count | count x (u32 len | key | u32 len | value)     metadata, sorted
//   u32 count | count x (u32 len | name | u32 rows | u32 cols | rows*cols f32)
// Readers accept any version up to kCheckpointVersion.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "histosge/model.hpp"

namespace histosge {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  HisToSGEModel model;
  std::string config_digest;
  std::uint64_t step = 0;
  std::map<std::string, std::string> metadata;
};

void save_checkpoint(const HisToSGEModel& model, std::uint64_t step,
                     const std::map<std::string, std::string>& metadata, const std::filesystem::path& path);

/// Throws FormatError on a malformed file, IncompatibilityError on a version
/// or digest mismatch.
Checkpoint load_checkpoint(const std::filesystem::path& path);

ModelConfig parse_model_config(const std::string& canonical);

}  // namespace histosge
