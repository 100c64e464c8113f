#include "gestalt/error.hpp"
#include "gestalt/random.hpp"
#include "gestalt/stimulus.hpp"

namespace gestalt {

std::string_view to_string(TrajectoryVariant v) {
  return v == TrajectoryVariant::aligned ? "aligned" : "rotated_control";
}

std::string_view to_string(TrajectoryAxis a) { return a == TrajectoryAxis::x ? "x" : "y"; }

TrajectoryAxis parse_trajectory_axis(std::string_view text) {
  if (text == "x") return TrajectoryAxis::x;
  if (text == "y") return TrajectoryAxis::y;
  throw ConfigError("trajectory axis must be 'x' or 'y'");
}

int control_rotation(std::uint64_t seed, int target_patch) {
  return (derive_seed(seed, "control-rotation", static_cast<std::uint64_t>(target_patch)) & 1) ? 90 : 270;
}

TrajectoryStimulus make_trajectory(const Stimulus& stim, int patch_size, int target_patch, int t,
                                   TrajectoryVariant variant, std::uint64_t seed, TrajectoryAxis axis,
                                   std::optional<int> rotation) {
  if (patch_size <= 0 || stim.image.width() % patch_size != 0) throw ConfigError("invalid patch size");
  const int cols = stim.image.width() / patch_size;
  const int rows = stim.image.height() / patch_size;
  if (target_patch < 0 || target_patch >= rows * cols) throw ConfigError("target patch outside the grid");

  const int x0 = (target_patch % cols) * patch_size;
  const int y0 = (target_patch / cols) * patch_size;
  const int wx = x0 + (axis == TrajectoryAxis::x ? t : 0);
  const int wy = y0 + (axis == TrajectoryAxis::y ? t : 0);
  if (wx + patch_size <= 0 || wy + patch_size <= 0 || wx >= stim.image.width() || wy >= stim.image.height()) {
    throw DataError("displaced window at t=" + std::to_string(t) + " lies outside the canvas");
  }

  TrajectoryStimulus out;
  out.target_patch = target_patch;
  out.t = t;
  out.variant = variant;
  Image window = extract_region(stim.image, wx, wy, patch_size, stim.background);
  if (variant == TrajectoryVariant::rotated_control) {
    out.rotation = rotation.value_or(control_rotation(seed, target_patch));
    if (out.rotation != 90 && out.rotation != 270) throw ConfigError("control rotation must be 90 or 270");
    window = rotate_quarter_turns(window, out.rotation / 90);
  }
  out.image = stim.image;
  paste_region(out.image, window, x0, y0);
  return out;
}

}  // namespace gestalt
