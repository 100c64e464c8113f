#include <algorithm>
#include <cmath>
#include <filesystem>
#include <queue>

#include <gtest/gtest.h>

#include "gestalt/error.hpp"
#include "gestalt/manifest.hpp"
#include "gestalt/png_io.hpp"
#include "gestalt/random.hpp"
#include "gestalt/stimulus.hpp"

namespace fs = std::filesystem;
using namespace gestalt;

namespace {

constexpr Rgb kRed{255, 0, 0};
constexpr Rgb kWhite{255, 255, 255};

Stimulus rect_stimulus(int x0, int y0, int x1, int y1, Rgb fg = kRed, Rgb bg = kWhite) {
  Stimulus s;
  s.kind = StimulusKind::blob;
  s.background = bg;
  s.image = Image(kCanvasSize, kCanvasSize, bg);
  Mask m(kCanvasSize, kCanvasSize);
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) {
      m.set(x, y, true);
      s.image.set(x, y, fg);
    }
  s.object_masks.push_back(m);
  return s;
}

// Cells holding both object and non-object pixels, by direct pixel count.
std::vector<int> perimeter_by_scan(const Mask& m, int patch) {
  std::vector<int> out;
  const int n = m.width() / patch;
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) {
      int in = 0;
      for (int y = r * patch; y < (r + 1) * patch; ++y)
        for (int x = c * patch; x < (c + 1) * patch; ++x) in += m.at(x, y);
      if (in > 0 && in < patch * patch) out.push_back(r * n + c);
    }
  return out;
}

int components(const Mask& m) {
  std::vector<char> seen(static_cast<std::size_t>(m.width() * m.height()), 0);
  int count = 0;
  for (int y = 0; y < m.height(); ++y)
    for (int x = 0; x < m.width(); ++x) {
      if (!m.at(x, y) || seen[static_cast<std::size_t>(y * m.width() + x)]) continue;
      ++count;
      std::queue<std::pair<int, int>> q;
      q.push({x, y});
      seen[static_cast<std::size_t>(y * m.width() + x)] = 1;
      while (!q.empty()) {
        const auto [cx, cy] = q.front();
        q.pop();
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const int nx = cx + dx, ny = cy + dy;
            if (!m.get(nx, ny) || seen[static_cast<std::size_t>(ny * m.width() + nx)]) continue;
            seen[static_cast<std::size_t>(ny * m.width() + nx)] = 1;
            q.push({nx, ny});
          }
      }
    }
  return count;
}

std::uint32_t pack(Rgb c) { return (std::uint32_t{c.r} << 16) | (std::uint32_t{c.g} << 8) | c.b; }

std::vector<std::uint32_t> patch_pixels(const Image& img, int patch, int index) {
  const int cols = img.width() / patch;
  const int x0 = (index % cols) * patch, y0 = (index / cols) * patch;
  std::vector<std::uint32_t> v;
  for (int y = y0; y < y0 + patch; ++y)
    for (int x = x0; x < x0 + patch; ++x) v.push_back(pack(img.at(x, y)));
  std::sort(v.begin(), v.end());
  return v;
}

bool same_patch(const Image& a, const Image& b, int patch, int index) {
  const int cols = a.width() / patch;
  const int x0 = (index % cols) * patch, y0 = (index / cols) * patch;
  for (int y = y0; y < y0 + patch; ++y)
    for (int x = x0; x < x0 + patch; ++x)
      if (a.at(x, y) != b.at(x, y)) return false;
  return true;
}

double brute_mask_distance(const Mask& a, const Mask& b) {
  double best = INFINITY;
  for (int y = 0; y < a.height(); ++y)
    for (int x = 0; x < a.width(); ++x) {
      if (!a.at(x, y)) continue;
      for (int v = 0; v < b.height(); ++v)
        for (int u = 0; u < b.width(); ++u)
          if (b.at(u, v)) best = std::min(best, std::hypot(double(x - u), double(y - v)));
    }
  return best;
}

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("gestalt_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

// ---------------------------------------------------------------------------
// Blobs

TEST(Blob, DeterministicPerSeed) {
  const Stimulus a = gen_blob(7, {});
  const Stimulus b = gen_blob(7, {});
  EXPECT_EQ(a.image, b.image);
  EXPECT_EQ(a.object_masks, b.object_masks);
  EXPECT_EQ(a.params, b.params);
  EXPECT_NE(gen_blob(8, {}).image, a.image);
}

TEST(Blob, BackgroundDiffersFromObjectAndPixelsAreExact) {
  const auto palette = full_palette();
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const Stimulus s = gen_blob(seed, {});
    ASSERT_EQ(s.object_masks.size(), 1u);
    const Mask& m = s.object_masks[0];
    ASSERT_TRUE(m.any());
    Rgb fg{};
    bool have_fg = false;
    for (int y = 0; y < kCanvasSize; ++y)
      for (int x = 0; x < kCanvasSize; ++x) {
        if (!m.at(x, y)) {
          ASSERT_EQ(s.image.at(x, y), s.background);
        } else if (!have_fg) {
          fg = s.image.at(x, y);
          have_fg = true;
        } else {
          ASSERT_EQ(s.image.at(x, y), fg);
        }
      }
    EXPECT_NE(fg, s.background);
    auto in_palette = [&](Rgb c) {
      return std::any_of(palette.begin(), palette.end(), [&](const Color& p) { return p.rgb == c; });
    };
    EXPECT_TRUE(in_palette(fg));
    EXPECT_TRUE(in_palette(s.background));
  }
}

TEST(Blob, EqualRadiiGiveACircle) {
  BlobParams p;
  p.complexity = 3;
  p.radius = 50;
  p.radius_spread = 0;
  p.angle_jitter = 0;
  const Stimulus s = gen_blob(11, p);
  const double cx = s.params["center"][0].get<double>();
  const double cy = s.params["center"][1].get<double>();
  const Mask& m = s.object_masks[0];
  int boundary = 0;
  for (int y = 0; y < kCanvasSize; ++y)
    for (int x = 0; x < kCanvasSize; ++x) {
      if (!m.at(x, y)) continue;
      if (m.get(x - 1, y) && m.get(x + 1, y) && m.get(x, y - 1) && m.get(x, y + 1)) continue;
      ++boundary;
      EXPECT_NEAR(std::hypot(x + 0.5 - cx, y + 0.5 - cy), p.radius, 2.0);
    }
  EXPECT_GT(boundary, 200);
}

TEST(Blob, RejectsBadParameters) {
  BlobParams p;
  p.palette = {color(ColorName::red)};
  EXPECT_THROW(gen_blob(0, p), ConfigError);
  BlobParams q;
  q.complexity = 2;
  EXPECT_THROW(gen_blob(0, q), ConfigError);
  BlobParams r;
  r.radius = 120;
  EXPECT_THROW(gen_blob(0, r), ConfigError);
}

// ---------------------------------------------------------------------------
// Curves

TEST(Curve, SingleComponentAndBoundedTurns) {
  const CurveParams p;
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const Stimulus s = gen_curve(seed, p);
    EXPECT_EQ(components(s.object_masks[0]), 1) << "seed " << seed;
    for (const auto& turn : s.params["turn_angles"]) EXPECT_LE(std::abs(turn.get<double>()), p.turn_bound + 1e-12);
    EXPECT_EQ(s.params["control_points"].size(), static_cast<std::size_t>(p.n_points));
    EXPECT_EQ(gen_curve(seed, p).image, s.image);
  }
}

TEST(Curve, TwoPointsGiveAThickSegment) {
  CurveParams p;
  p.n_points = 2;
  p.step_min = 40;
  p.step_max = 50;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Stimulus s = gen_curve(seed, p);
    const auto& pts = s.params["control_points"];
    const double len = std::hypot(pts[1][0].get<double>() - pts[0][0].get<double>(),
                                  pts[1][1].get<double>() - pts[0][1].get<double>());
    const double area = static_cast<double>(s.object_masks[0].count());
    EXPECT_NEAR(area / (len * p.thickness), 1.0, 0.15) << "seed " << seed;
  }
}

TEST(Curve, InfeasibleParametersExhaustTheBudget) {
  CurveParams p;
  p.step_min = 300;
  p.step_max = 320;
  EXPECT_THROW(gen_curve(1, p), GenerationError);
}

// ---------------------------------------------------------------------------
// Binding pairs

TEST(BindingPair, TwoTranslatedCopiesWithinGapBounds) {
  for (ShapeKind kind : {ShapeKind::blob, ShapeKind::curve}) {
    BindingParams p;
    p.shape = kind;
    for (std::uint64_t seed = 0; seed < 25; ++seed) {
      const Stimulus s = gen_binding_pair(seed, p);
      ASSERT_EQ(s.object_masks.size(), 2u);
      const auto bad = check_binding_pair(s);
      EXPECT_FALSE(bad.has_value()) << *bad;
      const Mask& a = s.object_masks[0];
      const Mask& b = s.object_masks[1];
      const int vx = s.params["offset"][0].get<int>();
      const int vy = s.params["offset"][1].get<int>();
      for (int y = 0; y < kCanvasSize; ++y)
        for (int x = 0; x < kCanvasSize; ++x) {
          ASSERT_FALSE(a.at(x, y) && b.at(x, y));
          ASSERT_EQ(b.at(x, y), a.get(x - vx, y - vy));
        }
      const double gap = mask_distance(a, b);
      EXPECT_GE(gap, 5.0);
      EXPECT_LE(gap, 12.0);
      EXPECT_DOUBLE_EQ(gap, s.params["gap"].get<double>());
    }
  }
}

TEST(BindingPair, CheckerCatchesViolations) {
  Stimulus s = gen_binding_pair(3, {});
  ASSERT_FALSE(check_binding_pair(s).has_value());
  Stimulus moved = s;
  moved.params["offset"][0] = moved.params["offset"][0].get<int>() + 1;
  EXPECT_TRUE(check_binding_pair(moved).has_value());
  Stimulus stained = s;
  for (int y = 0; y < kCanvasSize; ++y)
    for (int x = 0; x < kCanvasSize; ++x)
      if (!s.object_masks[0].at(x, y) && !s.object_masks[1].at(x, y) && x == 0) stained.image.set(x, y, Rgb{1, 2, 3});
  EXPECT_TRUE(check_binding_pair(stained).has_value());
  EXPECT_TRUE(check_binding_pair(s, 20.0, 30.0).has_value());
}

TEST(MaskDistance, MatchesBruteForce) {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    Mask a(24, 24), b(24, 24);
    for (int k = 0; k < 6; ++k) {
      a.set(rng.uniform_int(0, 23), rng.uniform_int(0, 23), true);
      b.set(rng.uniform_int(0, 23), rng.uniform_int(0, 23), true);
    }
    bool overlap = false;
    for (int y = 0; y < 24; ++y)
      for (int x = 0; x < 24; ++x) overlap = overlap || (a.at(x, y) && b.at(x, y));
    const double expected = overlap ? 0.0 : brute_mask_distance(a, b);
    EXPECT_NEAR(mask_distance(a, b), expected, 1e-12);
  }
}

// ---------------------------------------------------------------------------
// Patch grid

TEST(PatchGrid, SquareOverThreeByThreeCellsHasEightPerimeterPatches) {
  // Covers cells 1..3 in both directions: the centre cell fully, the border
  // cells partially.
  const Stimulus s = rect_stimulus(20, 20, 60, 60);
  const PatchGrid g = make_patch_grid(s, 16);
  const auto scan = perimeter_by_scan(s.object_masks[0], 16);
  ASSERT_EQ(g.perimeter_patches.size(), 1u);
  EXPECT_EQ(g.perimeter_patches[0], scan);
  EXPECT_EQ(scan.size(), 8u);
  const int centre = g.index(2, 2);
  EXPECT_EQ(std::count(scan.begin(), scan.end(), centre), 0);
  EXPECT_EQ(g.object_patches[0].size(), 9u);
  for (int p : g.perimeter_patches[0])
    EXPECT_TRUE(std::count(g.object_patches[0].begin(), g.object_patches[0].end(), p));
}

TEST(PatchGrid, FullCanvasObjectHasNoPerimeter) {
  const Stimulus s = rect_stimulus(0, 0, kCanvasSize, kCanvasSize);
  for (int patch : {14, 16, 32}) {
    const PatchGrid g = make_patch_grid(s, patch);
    EXPECT_TRUE(g.perimeter_patches[0].empty());
    EXPECT_EQ(static_cast<int>(g.object_patches[0].size()), g.size());
  }
}

TEST(PatchGrid, SingleCellObjectIsPerimeterOnlyWithBoundary) {
  const Stimulus inside = rect_stimulus(34, 34, 44, 44);
  EXPECT_EQ(perimeter_patches(inside, 16)[0], std::vector<int>{2 * 14 + 2});
  const Stimulus exact = rect_stimulus(32, 32, 48, 48);
  EXPECT_TRUE(perimeter_patches(exact, 16)[0].empty());
  EXPECT_EQ(make_patch_grid(exact, 16).object_patches[0], std::vector<int>{2 * 14 + 2});
}

TEST(PatchGrid, RejectsPatchSizesThatDoNotDivideTheCanvas) {
  EXPECT_THROW(make_patch_grid(rect_stimulus(0, 0, 10, 10), 15), ConfigError);
}

// ---------------------------------------------------------------------------
// Scrambles

TEST(Scramble, OrientationPreservesPerPatchMultisetsAndInverts) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Stimulus s = gen_binding_pair(seed, {});
    const PatchGrid g = make_patch_grid(s, 16);
    const Stimulus o = scramble_orientation(s, 16, seed + 100);
    const auto occ = g.occupied_patches();
    for (int p = 0; p < g.size(); ++p) {
      if (std::binary_search(occ.begin(), occ.end(), p))
        EXPECT_EQ(patch_pixels(o.image, 16, p), patch_pixels(s.image, 16, p));
      else
        EXPECT_TRUE(same_patch(o.image, s.image, 16, p));
    }
    const Stimulus back = unscramble_orientation(o);
    EXPECT_EQ(back.image, s.image);
    EXPECT_EQ(back.object_masks, s.object_masks);
    for (const auto& r : o.params["scramble"]["rotations"]) {
      const int deg = r[1].get<int>();
      EXPECT_TRUE(deg == 90 || deg == 180 || deg == 270);
    }
  }
}

TEST(Scramble, SolidPatchIsUnchangedByRotation) {
  const Stimulus s = rect_stimulus(20, 20, 60, 60);
  const Stimulus o = scramble_orientation(s, 16, 4);
  EXPECT_TRUE(same_patch(o.image, s.image, 16, 2 * 14 + 2));
}

TEST(Scramble, LocationPermutesObjectPatchesInPlace) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Stimulus s = gen_binding_pair(seed, {.shape = ShapeKind::curve});
    const PatchGrid g = make_patch_grid(s, 16);
    const Stimulus l = scramble_location(s, 16, seed + 7);
    const auto occ = g.occupied_patches();
    std::vector<std::vector<std::uint32_t>> before, after;
    for (int p : occ) {
      std::vector<std::uint32_t> raw_b, raw_a;
      const int x0 = g.col_of(p) * 16, y0 = g.row_of(p) * 16;
      for (int y = y0; y < y0 + 16; ++y)
        for (int x = x0; x < x0 + 16; ++x) {
          raw_b.push_back(pack(s.image.at(x, y)));
          raw_a.push_back(pack(l.image.at(x, y)));
        }
      before.push_back(raw_b);
      after.push_back(raw_a);
    }
    std::sort(before.begin(), before.end());
    std::sort(after.begin(), after.end());
    EXPECT_EQ(before, after);
    for (int p = 0; p < g.size(); ++p)
      if (!std::binary_search(occ.begin(), occ.end(), p)) {
        EXPECT_TRUE(same_patch(l.image, s.image, 16, p));
      }
    EXPECT_EQ(make_patch_grid(l, 16).occupied_patches(), occ);
  }
}

TEST(Scramble, SinglePatchObjectIsUnchanged) {
  const Stimulus s = rect_stimulus(34, 34, 44, 44);
  EXPECT_EQ(scramble_location(s, 16, 1).image, s.image);
}

TEST(Scramble, RequiresAnObject) {
  Stimulus s = rect_stimulus(0, 0, 1, 1);
  s.object_masks.clear();
  EXPECT_THROW(scramble_orientation(s, 16, 0), ConfigError);
  EXPECT_THROW(scramble_location(s, 16, 0), ConfigError);
}

// ---------------------------------------------------------------------------
// Trajectories

TEST(Trajectory, ZeroShiftAlignedIsIdentity) {
  const Stimulus s = gen_blob(3, {});
  const auto per = perimeter_patches(s, 16)[0];
  ASSERT_FALSE(per.empty());
  for (int target : per) {
    const auto t = make_trajectory(s, 16, target, 0, TrajectoryVariant::aligned, 9);
    EXPECT_EQ(t.image, s.image);
  }
}

TEST(Trajectory, ControlKeepsTargetPixelContent) {
  const Stimulus s = gen_blob(4, {});
  const auto per = perimeter_patches(s, 16)[0];
  for (int target : per) {
    const auto a = make_trajectory(s, 16, target, 0, TrajectoryVariant::rotated_control, 9);
    EXPECT_TRUE(a.rotation == 90 || a.rotation == 270);
    EXPECT_EQ(patch_pixels(a.image, 16, target), patch_pixels(s.image, 16, target));
    for (int t : {-6, 4}) {
      const auto al = make_trajectory(s, 16, target, t, TrajectoryVariant::aligned, 9);
      const auto rc = make_trajectory(s, 16, target, t, TrajectoryVariant::rotated_control, 9);
      EXPECT_EQ(patch_pixels(al.image, 16, target), patch_pixels(rc.image, 16, target));
    }
  }
}

TEST(Trajectory, ConstantNeighbourhoodIsUnchanged) {
  const Stimulus s = rect_stimulus(32, 32, 128, 128);
  const int target = 4 * 14 + 4;
  for (int t = -16; t <= 16; t += 2) {
    EXPECT_EQ(make_trajectory(s, 16, target, t, TrajectoryVariant::aligned, 1).image, s.image);
    EXPECT_EQ(make_trajectory(s, 16, target, t, TrajectoryVariant::aligned, 1, TrajectoryAxis::y).image, s.image);
  }
}

TEST(Trajectory, OverhangUsesBackgroundAndOffCanvasIsAnError) {
  const Stimulus s = rect_stimulus(0, 0, 16, 16);
  const auto t = make_trajectory(s, 16, 0, -8, TrajectoryVariant::aligned, 1);
  for (int x = 0; x < 8; ++x) EXPECT_EQ(t.image.at(x, 5), kWhite);
  for (int x = 8; x < 16; ++x) EXPECT_EQ(t.image.at(x, 5), kRed);
  EXPECT_THROW(make_trajectory(s, 16, 0, -16, TrajectoryVariant::aligned, 1), DataError);
}

TEST(Trajectory, ControlRotationIsReproducible) {
  int n90 = 0;
  for (int target = 0; target < 200; ++target) {
    const int r = control_rotation(42, target);
    EXPECT_EQ(r, control_rotation(42, target));
    n90 += r == 90;
  }
  EXPECT_GT(n90, 60);
  EXPECT_LT(n90, 140);
}

// ---------------------------------------------------------------------------
// Ingestion

TEST(Ingest, AllTrueMaskCoversEveryPatch) {
  const Image img(300, 260, Rgb{10, 20, 30});
  const GrayImage labels(300, 260, 1);
  const Stimulus s = ingest_segmented(img, labels);
  EXPECT_EQ(s.kind, StimulusKind::ingested);
  EXPECT_EQ(s.image.width(), kCanvasSize);
  ASSERT_EQ(s.object_masks.size(), 1u);
  EXPECT_EQ(make_patch_grid(s, 16).object_patches[0].size(), 196u);
}

TEST(Ingest, DiskPerimeterMatchesPixelScan) {
  Image img(kCanvasSize, kCanvasSize, Rgb{0, 0, 255});
  GrayImage labels(kCanvasSize, kCanvasSize, 0);
  for (int y = 0; y < kCanvasSize; ++y)
    for (int x = 0; x < kCanvasSize; ++x)
      if (std::hypot(x + 0.5 - 100.0, y + 0.5 - 90.0) <= 45.0) {
        labels.set(x, y, 3);
        img.set(x, y, Rgb{255, 255, 0});
      }
  const Stimulus s = ingest_segmented(img, labels);
  ASSERT_EQ(s.object_masks.size(), 1u);
  EXPECT_EQ(make_patch_grid(s, 16).perimeter_patches[0], perimeter_by_scan(s.object_masks[0], 16));
  EXPECT_EQ(s.background, (Rgb{0, 0, 255}));
}

TEST(Ingest, RejectsEmptyAndMismatchedMasks) {
  EXPECT_THROW(ingest_segmented(Image(50, 50), GrayImage(50, 50, 0)), DataError);
  EXPECT_THROW(ingest_segmented(Image(50, 50), GrayImage(40, 50, 1)), DataError);
}

// ---------------------------------------------------------------------------
// Manifest

TEST(Manifest, StimulusAndRecordsRoundTrip) {
  const fs::path dir = temp_dir("manifest");
  const Stimulus s = gen_binding_pair(12, {});
  const ManifestRecord r = save_stimulus(s, dir, "pair-1", "binding", "object", 16);
  const Stimulus back = load_stimulus(r, dir);
  EXPECT_EQ(back.image, s.image);
  EXPECT_EQ(back.object_masks, s.object_masks);
  EXPECT_EQ(back.background, s.background);

  write_manifest(dir / "manifest.jsonl", {r, r});
  const auto records = read_manifest(dir / "manifest.jsonl");
  ASSERT_EQ(records.size(), 2u);
  EXPECT_EQ(to_json(records[0]), to_json(r));
  EXPECT_EQ(records[1].grid.object_patches, r.grid.object_patches);
}
