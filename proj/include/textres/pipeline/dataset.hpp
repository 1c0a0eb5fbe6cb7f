#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "textres/core/image.hpp"
#include "textres/degrade/degrade.hpp"

namespace textres::pipeline {

/// Procedural clean image: layered value noise over a colour gradient with a
/// few flat shapes on top.
Image procedural_image(int size, Seed seed, std::uint64_t index);

/// 8-bit PNG. Values are written as round(255 v) and read back as v / 255.
Image read_png(const std::filesystem::path& path);
void write_png(const Image& img, const std::filesystem::path& path);
/// round(255 v) / 255, the value a PNG round trip yields.
Image quantize8(const Image& img);

struct ManifestRecord {
  std::string id;
  std::string clean_path;     // relative to the manifest directory
  std::string degraded_path;  // relative to the manifest directory
  std::string kind;
  std::string params_json;    // serialized degradation parameters
  std::uint64_t seed = 0;
  std::optional<std::string> guidance_path;
};

std::string params_to_json(const degrade::DegradationSpec& spec);

std::vector<ManifestRecord> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::vector<ManifestRecord>& records, const std::filesystem::path& path);

/// Reads an image referenced by a manifest; missing or unreadable files raise
/// DataError naming the record.
Image load_record_image(const std::filesystem::path& manifest_dir, const std::string& rel_path,
                        const std::string& record_id, const char* role);

/// Writes `contents` to `path` through a temporary file and rename.
void write_text_file(const std::filesystem::path& path, const std::string& contents);

}  // namespace textres::pipeline
