#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gestalt/stimulus.hpp"

namespace gestalt {

// One line of a dataset manifest. Manifests are line-delimited JSON: one
// compact object per stimulus, keys sorted, paths relative to the manifest's
// directory.
struct ManifestRecord {
  std::string id;
  std::string dataset;
  std::string variant;  // object | scrambled_orientation | scrambled_location
  StimulusKind kind = StimulusKind::blob;
  std::uint64_t seed = 0;
  std::string image;
  std::vector<std::string> masks;
  Rgb background;
  PatchGrid grid;
  nlohmann::json params = nlohmann::json::object();
};

nlohmann::json to_json(const ManifestRecord& record);
ManifestRecord record_from_json(const nlohmann::json& j);

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestRecord>& records);
std::vector<ManifestRecord> read_manifest(const std::filesystem::path& path);

// Writes image + masks as PNG under `root` and returns the manifest record.
ManifestRecord save_stimulus(const Stimulus& stim, const std::filesystem::path& root, const std::string& id,
                             const std::string& dataset, const std::string& variant, int patch_size);
Stimulus load_stimulus(const ManifestRecord& record, const std::filesystem::path& root);

}  // namespace gestalt
