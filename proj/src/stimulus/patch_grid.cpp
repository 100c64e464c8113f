#include <algorithm>
#include <set>

#include "gestalt/error.hpp"
#include "gestalt/stimulus.hpp"

namespace gestalt {
namespace {

void check_patch_size(const Stimulus& stim, int patch_size) {
  if (patch_size <= 0 || stim.image.width() % patch_size != 0 || stim.image.height() % patch_size != 0) {
    throw ConfigError("patch size " + std::to_string(patch_size) + " does not divide the " +
                      std::to_string(stim.image.width()) + " px canvas");
  }
}

}  // namespace

std::vector<int> PatchGrid::occupied_patches() const {
  std::set<int> all;
  for (const auto& list : object_patches) all.insert(list.begin(), list.end());
  return {all.begin(), all.end()};
}

std::vector<std::vector<int>> perimeter_patches(const Stimulus& stim, int patch_size) {
  check_patch_size(stim, patch_size);
  const int rows = stim.image.height() / patch_size;
  const int cols = stim.image.width() / patch_size;
  std::vector<std::vector<int>> result;
  result.reserve(stim.object_masks.size());
  for (const Mask& mask : stim.object_masks) {
    std::vector<int> patches;
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < cols; ++c) {
        bool inside = false, outside = false;
        for (int y = r * patch_size; y < (r + 1) * patch_size && !(inside && outside); ++y) {
          for (int x = c * patch_size; x < (c + 1) * patch_size; ++x) {
            (mask.at(x, y) ? inside : outside) = true;
            if (inside && outside) break;
          }
        }
        if (inside && outside) patches.push_back(r * cols + c);
      }
    }
    result.push_back(std::move(patches));
  }
  return result;
}

PatchGrid make_patch_grid(const Stimulus& stim, int patch_size) {
  check_patch_size(stim, patch_size);
  PatchGrid grid;
  grid.patch_size = patch_size;
  grid.rows = stim.image.height() / patch_size;
  grid.cols = stim.image.width() / patch_size;
  for (const Mask& mask : stim.object_masks) {
    std::vector<int> patches;
    for (int r = 0; r < grid.rows; ++r) {
      for (int c = 0; c < grid.cols; ++c) {
        bool hit = false;
        for (int y = r * patch_size; y < (r + 1) * patch_size && !hit; ++y) {
          for (int x = c * patch_size; x < (c + 1) * patch_size && !hit; ++x) hit = mask.at(x, y);
        }
        if (hit) patches.push_back(grid.index(r, c));
      }
    }
    grid.object_patches.push_back(std::move(patches));
  }
  grid.perimeter_patches = perimeter_patches(stim, patch_size);
  return grid;
}

}  // namespace gestalt
