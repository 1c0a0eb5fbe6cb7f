#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace textres {

inline constexpr std::uint32_t kCheckpointFormatVersion = 1;

/// Named float32 parameter blobs plus provenance.
///
/// On-disk layout (all integers little-endian):
///   "TXRS" | u32 format_version | u32 len, module_id | u32 len, config_digest |
///   repeated until EOF: u32 len, name | u64 count | count x f32
struct Checkpoint {
  std::uint32_t format_version = kCheckpointFormatVersion;
  std::string module_id;
  std::string config_digest;
  std::vector<std::pair<std::string, std::vector<float>>> blobs;

  const std::vector<float>* find(const std::string& name) const;
  bool operator==(const Checkpoint&) const = default;
};

struct LoadedCheckpoint {
  Checkpoint checkpoint;
  /// Set when the stored config digest differs from the expected one.
  std::optional<std::string> warning;
};

/// Writes to a sibling temp file and renames it into place.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);

Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Loads and checks module_id (ModuleMismatch on error). A config digest
/// mismatch is reported through LoadedCheckpoint::warning, not thrown.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path, const std::string& expected_module,
                                 const std::string& expected_digest = {});

}  // namespace textres
