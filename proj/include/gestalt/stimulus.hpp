#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "gestalt/image.hpp"
#include "gestalt/palette.hpp"

namespace gestalt {

inline constexpr int kCanvasSize = 224;

enum class StimulusKind { blob, curve, binding_pair, ingested };
std::string_view to_string(StimulusKind kind);
StimulusKind parse_stimulus_kind(std::string_view text);

struct Stimulus {
  Image image;
  std::vector<Mask> object_masks;
  StimulusKind kind = StimulusKind::blob;
  std::uint64_t seed = 0;
  Rgb background;
  // Generation record: colors, control points, offsets, scramble metadata.
  nlohmann::json params = nlohmann::json::object();
};

// ---------------------------------------------------------------------------
// Patch grid

struct PatchGrid {
  int patch_size = 16;
  int rows = 0;
  int cols = 0;
  // Per object: patches holding at least one pixel of that object.
  std::vector<std::vector<int>> object_patches;
  // Per object: patches holding both object and non-object pixels of that object's mask.
  std::vector<std::vector<int>> perimeter_patches;

  int size() const { return rows * cols; }
  int row_of(int patch) const { return patch / cols; }
  int col_of(int patch) const { return patch % cols; }
  int index(int row, int col) const { return row * cols + col; }
  // Union of all object patches, sorted.
  std::vector<int> occupied_patches() const;
};

// patch_size must divide the canvas.
PatchGrid make_patch_grid(const Stimulus& stim, int patch_size);

// Per object, the patches whose cell holds both object and background pixels
// of that object's mask. An empty entry means the object never crosses a patch
// boundary and must be skipped by callers that need perimeter patches.
std::vector<std::vector<int>> perimeter_patches(const Stimulus& stim, int patch_size);

// ---------------------------------------------------------------------------
// Generators

struct BlobParams {
  double radius = 60.0;          // maximal radius in px
  double radius_spread = 0.35;   // per-point radius drawn from [radius * (1 - spread), radius]
  int complexity = 8;            // radial control points, >= 3
  double angle_jitter = 0.3;     // angular jitter as a fraction of the even spacing
  std::vector<Color> palette = full_palette();
};

Stimulus gen_blob(std::uint64_t seed, const BlobParams& params);

struct CurveParams {
  int n_points = 6;
  double step_min = 30.0;
  double step_max = 50.0;
  double turn_bound = 0.7;   // radians
  double thickness = 6.0;
  double margin = 16.0;      // safe window inset from the canvas border
  double min_spacing = 14.0; // clearance from non-adjacent parts of the path
  int retry_budget = 400;
  std::vector<Color> palette = full_palette();
};

Stimulus gen_curve(std::uint64_t seed, const CurveParams& params);

enum class ShapeKind { blob, curve };
std::string_view to_string(ShapeKind kind);

struct BindingParams {
  ShapeKind shape = ShapeKind::blob;
  BlobParams blob{.radius = 36.0};
  CurveParams curve{.n_points = 4, .step_min = 20.0, .step_max = 32.0};
  double gap_min = 5.0;
  double gap_max = 12.0;
  int retry_budget = 200;
};

// Two pixel-identical copies of one shape, separated by a boundary gap in
// [gap_min, gap_max]. The gap is the smallest Euclidean distance between pixel
// centres of the two masks.
Stimulus gen_binding_pair(std::uint64_t seed, const BindingParams& params);

// Smallest distance between pixel centres of two masks (0 when they overlap).
double mask_distance(const Mask& a, const Mask& b);

// Checks a binding pair: two disjoint nonempty masks, the second equal to the
// first moved by params["offset"], identical pixels under both, gap within
// bounds and plain background elsewhere. Returns the first violation found.
std::optional<std::string> check_binding_pair(const Stimulus& stim, double gap_min = 5.0, double gap_max = 12.0);

// ---------------------------------------------------------------------------
// Scrambles. Masks are transformed together with the pixels; the applied
// transform is appended to params["scramble"].

Stimulus scramble_orientation(const Stimulus& stim, int patch_size, std::uint64_t seed);
Stimulus scramble_location(const Stimulus& stim, int patch_size, std::uint64_t seed);

// Undo a recorded orientation scramble.
Stimulus unscramble_orientation(const Stimulus& scrambled);

// ---------------------------------------------------------------------------
// Continuity trajectories

enum class TrajectoryVariant { aligned, rotated_control };
enum class TrajectoryAxis { x, y };
std::string_view to_string(TrajectoryVariant v);
std::string_view to_string(TrajectoryAxis a);
TrajectoryAxis parse_trajectory_axis(std::string_view text);

struct TrajectoryStimulus {
  Image image;
  int target_patch = 0;
  int t = 0;
  TrajectoryVariant variant = TrajectoryVariant::aligned;
  int rotation = 0;  // degrees, 90 or 270 for the control, 0 otherwise
};

// Rotation used by the control condition for (seed, target): 90 or 270.
int control_rotation(std::uint64_t seed, int target_patch);

// Replaces the target patch with the window displaced by t pixels along the
// axis; overhang is filled with the stimulus background. For the control
// variant the window content is additionally rotated. When `rotation` is
// unset it is drawn with control_rotation(seed, target).
TrajectoryStimulus make_trajectory(const Stimulus& stim, int patch_size, int target_patch, int t,
                                   TrajectoryVariant variant, std::uint64_t seed,
                                   TrajectoryAxis axis = TrajectoryAxis::x,
                                   std::optional<int> rotation = std::nullopt);

// ---------------------------------------------------------------------------
// Naturalistic images with segmentation masks

// Every distinct nonzero label in `labels` becomes one object. Both rasters
// are centre-cropped to a square and resized to the canvas (bilinear for the
// image, nearest for the labels).
Stimulus ingest_segmented(const Image& image, const GrayImage& labels);
Stimulus ingest_segmented(const std::string& image_path, const std::string& mask_path);

}  // namespace gestalt
