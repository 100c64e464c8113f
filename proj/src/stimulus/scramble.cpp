#include <algorithm>

#include "gestalt/error.hpp"
#include "gestalt/random.hpp"
#include "gestalt/stimulus.hpp"

namespace gestalt {
namespace {

void require_objects(const Stimulus& stim) {
  if (stim.object_masks.empty()) throw ConfigError("scramble needs a stimulus with at least one object");
}

void rotate_patch(Stimulus& s, int x0, int y0, int size, int quarter_turns) {
  paste_region(s.image, rotate_quarter_turns(extract_region(s.image, x0, y0, size, s.background), quarter_turns),
               x0, y0);
  for (Mask& m : s.object_masks) {
    paste_region(m, rotate_quarter_turns(extract_region(m, x0, y0, size), quarter_turns), x0, y0);
  }
}

}  // namespace

Stimulus scramble_orientation(const Stimulus& stim, int patch_size, std::uint64_t seed) {
  require_objects(stim);
  const PatchGrid grid = make_patch_grid(stim, patch_size);
  Rng rng(seed);
  Stimulus out = stim;
  nlohmann::json rotations = nlohmann::json::array();
  for (int patch : grid.occupied_patches()) {
    const int k = rng.uniform_int(1, 3);
    rotate_patch(out, grid.col_of(patch) * patch_size, grid.row_of(patch) * patch_size, patch_size, k);
    rotations.push_back({patch, k * 90});
  }
  out.params["scramble"] = {{"type", "orientation"}, {"patch_size", patch_size}, {"seed", seed},
                            {"rotations", rotations}};
  return out;
}

Stimulus unscramble_orientation(const Stimulus& scrambled) {
  const auto& rec = scrambled.params.at("scramble");
  if (rec.at("type") != "orientation") throw ConfigError("stimulus carries no orientation scramble");
  const int patch_size = rec.at("patch_size").get<int>();
  const int cols = scrambled.image.width() / patch_size;
  Stimulus out = scrambled;
  for (const auto& entry : rec.at("rotations")) {
    const int patch = entry.at(0).get<int>();
    const int k = entry.at(1).get<int>() / 90;
    rotate_patch(out, (patch % cols) * patch_size, (patch / cols) * patch_size, patch_size, 4 - k);
  }
  out.params.erase("scramble");
  return out;
}

Stimulus scramble_location(const Stimulus& stim, int patch_size, std::uint64_t seed) {
  require_objects(stim);
  const PatchGrid grid = make_patch_grid(stim, patch_size);
  const std::vector<int> positions = grid.occupied_patches();
  std::vector<int> sources = positions;
  Rng rng(seed);
  std::shuffle(sources.begin(), sources.end(), rng.engine());

  Stimulus out = stim;
  nlohmann::json permutation = nlohmann::json::array();
  for (std::size_t i = 0; i < positions.size(); ++i) {
    const int dst = positions[i];
    const int src = sources[i];
    const int dx = grid.col_of(dst) * patch_size, dy = grid.row_of(dst) * patch_size;
    const int sx = grid.col_of(src) * patch_size, sy = grid.row_of(src) * patch_size;
    paste_region(out.image, extract_region(stim.image, sx, sy, patch_size, stim.background), dx, dy);
    for (std::size_t m = 0; m < stim.object_masks.size(); ++m) {
      paste_region(out.object_masks[m], extract_region(stim.object_masks[m], sx, sy, patch_size), dx, dy);
    }
    permutation.push_back({dst, src});
  }
  out.params["scramble"] = {{"type", "location"}, {"patch_size", patch_size}, {"seed", seed},
                            {"permutation", permutation}};
  return out;
}

}  // namespace gestalt
