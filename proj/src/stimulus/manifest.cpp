#include "gestalt/manifest.hpp"

#include <fstream>

#include "gestalt/error.hpp"
#include "gestalt/png_io.hpp"

namespace gestalt {

nlohmann::json to_json(const ManifestRecord& r) {
  return {{"id", r.id},
          {"dataset", r.dataset},
          {"variant", r.variant},
          {"kind", std::string(to_string(r.kind))},
          {"seed", r.seed},
          {"image", r.image},
          {"masks", r.masks},
          {"background", {r.background.r, r.background.g, r.background.b}},
          {"patch_size", r.grid.patch_size},
          {"grid", {{"rows", r.grid.rows},
                    {"cols", r.grid.cols},
                    {"object_patches", r.grid.object_patches},
                    {"perimeter_patches", r.grid.perimeter_patches}}},
          {"params", r.params}};
}

ManifestRecord record_from_json(const nlohmann::json& j) {
  try {
    ManifestRecord r;
    r.id = j.at("id").get<std::string>();
    r.dataset = j.at("dataset").get<std::string>();
    r.variant = j.at("variant").get<std::string>();
    r.kind = parse_stimulus_kind(j.at("kind").get<std::string>());
    r.seed = j.at("seed").get<std::uint64_t>();
    r.image = j.at("image").get<std::string>();
    r.masks = j.at("masks").get<std::vector<std::string>>();
    const auto bg = j.at("background").get<std::vector<int>>();
    if (bg.size() != 3) throw DataError("background must have 3 channels");
    r.background = {static_cast<std::uint8_t>(bg[0]), static_cast<std::uint8_t>(bg[1]),
                    static_cast<std::uint8_t>(bg[2])};
    r.grid.patch_size = j.at("patch_size").get<int>();
    const auto& g = j.at("grid");
    r.grid.rows = g.at("rows").get<int>();
    r.grid.cols = g.at("cols").get<int>();
    r.grid.object_patches = g.at("object_patches").get<std::vector<std::vector<int>>>();
    r.grid.perimeter_patches = g.at("perimeter_patches").get<std::vector<std::vector<int>>>();
    r.params = j.value("params", nlohmann::json::object());
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed manifest record: ") + e.what());
  }
}

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestRecord>& records) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write manifest '" + path.string() + "'");
  for (const auto& r : records) out << to_json(r).dump() << '\n';
  if (!out) throw DataError("failed writing manifest '" + path.string() + "'");
}

std::vector<ManifestRecord> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read manifest '" + path.string() + "'");
  std::vector<ManifestRecord> records;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    records.push_back(record_from_json(j));
  }
  return records;
}

ManifestRecord save_stimulus(const Stimulus& stim, const std::filesystem::path& root, const std::string& id,
                             const std::string& dataset, const std::string& variant, int patch_size) {
  std::filesystem::create_directories(root / "images");
  std::filesystem::create_directories(root / "masks");
  ManifestRecord r;
  r.id = id;
  r.dataset = dataset;
  r.variant = variant;
  r.kind = stim.kind;
  r.seed = stim.seed;
  r.background = stim.background;
  r.grid = make_patch_grid(stim, patch_size);
  r.params = stim.params;
  r.image = "images/" + id + ".png";
  write_png(root / r.image, stim.image);
  for (std::size_t m = 0; m < stim.object_masks.size(); ++m) {
    r.masks.push_back("masks/" + id + "_" + std::to_string(m) + ".png");
    write_png(root / r.masks.back(), stim.object_masks[m]);
  }
  return r;
}

Stimulus load_stimulus(const ManifestRecord& r, const std::filesystem::path& root) {
  Stimulus s;
  s.kind = r.kind;
  s.seed = r.seed;
  s.background = r.background;
  s.params = r.params;
  s.image = read_png_rgb(root / r.image);
  for (const auto& m : r.masks) {
    const GrayImage g = read_png_gray(root / m);
    if (g.width() != s.image.width() || g.height() != s.image.height()) {
      throw DataError("mask '" + m + "' does not match its image size");
    }
    Mask mask(g.width(), g.height());
    for (int y = 0; y < g.height(); ++y) {
      for (int x = 0; x < g.width(); ++x) mask.set(x, y, g.at(x, y) >= 128);
    }
    s.object_masks.push_back(std::move(mask));
  }
  return s;
}

}  // namespace gestalt
