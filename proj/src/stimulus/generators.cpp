#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "gestalt/error.hpp"
#include "gestalt/random.hpp"
#include "gestalt/stimulus.hpp"

namespace gestalt {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct Vec2 {
  double x = 0;
  double y = 0;
};

Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
double norm(Vec2 a) { return std::sqrt(dot(a, a)); }
double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }

double point_segment_distance(Vec2 p, Vec2 a, Vec2 b) {
  const Vec2 ab = b - a;
  const double len2 = dot(ab, ab);
  double t = len2 > 0 ? dot(p - a, ab) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return norm(p - (a + t * ab));
}

bool segments_intersect(Vec2 a, Vec2 b, Vec2 c, Vec2 d) {
  const double d1 = cross(b - a, c - a);
  const double d2 = cross(b - a, d - a);
  const double d3 = cross(d - c, a - c);
  const double d4 = cross(d - c, b - c);
  return ((d1 > 0) != (d2 > 0)) && ((d3 > 0) != (d4 > 0));
}

double segment_distance(Vec2 a, Vec2 b, Vec2 c, Vec2 d) {
  if (segments_intersect(a, b, c, d)) return 0.0;
  return std::min({point_segment_distance(a, c, d), point_segment_distance(b, c, d),
                   point_segment_distance(c, a, b), point_segment_distance(d, a, b)});
}

void check_palette(const std::vector<Color>& palette) {
  if (palette.size() < 2) throw ConfigError("palette needs at least 2 colors");
  for (std::size_t i = 0; i < palette.size(); ++i) {
    for (std::size_t j = i + 1; j < palette.size(); ++j) {
      if (palette[i].name == palette[j].name) throw ConfigError("palette lists a color twice");
    }
  }
}

// Foreground from the palette, background from the palette minus the foreground.
std::pair<Color, Color> pick_colors(Rng& rng, const std::vector<Color>& palette) {
  const int fg = rng.uniform_int(0, static_cast<int>(palette.size()) - 1);
  int bg = rng.uniform_int(0, static_cast<int>(palette.size()) - 2);
  if (bg >= fg) ++bg;
  return {palette[fg], palette[bg]};
}

nlohmann::json rgb_json(Rgb c) { return nlohmann::json::array({c.r, c.g, c.b}); }

Stimulus paint_single(const Mask& mask, Color fg, Color bg, StimulusKind kind, std::uint64_t seed) {
  Stimulus s;
  s.kind = kind;
  s.seed = seed;
  s.background = bg.rgb;
  s.image = Image(mask.width(), mask.height(), bg.rgb);
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (mask.at(x, y)) s.image.set(x, y, fg.rgb);
    }
  }
  s.object_masks.push_back(mask);
  s.params["object_color"] = std::string(to_string(fg.name));
  s.params["background_color"] = std::string(to_string(bg.name));
  s.params["object_rgb"] = rgb_json(fg.rgb);
  s.params["background_rgb"] = rgb_json(bg.rgb);
  return s;
}

// Periodic cubic Hermite interpolation of r(theta) through radial control
// points at strictly increasing angles covering one turn.
class RadialProfile {
 public:
  RadialProfile(std::vector<double> angles, std::vector<double> radii)
      : angles_(std::move(angles)), radii_(std::move(radii)), slopes_(radii_.size()) {
    const std::size_t n = angles_.size();
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t prev = (i + n - 1) % n;
      const std::size_t next = (i + 1) % n;
      double a0 = angles_[prev];
      double a2 = angles_[next];
      if (prev >= i) a0 -= kTwoPi;
      if (next <= i) a2 += kTwoPi;
      slopes_[i] = (radii_[next] - radii_[prev]) / (a2 - a0);
    }
  }

  double operator()(double theta) const {
    const std::size_t n = angles_.size();
    double a = theta - angles_[0];
    a -= kTwoPi * std::floor(a / kTwoPi);
    a += angles_[0];
    std::size_t i = n - 1;
    for (std::size_t k = 0; k + 1 < n; ++k) {
      if (a >= angles_[k] && a < angles_[k + 1]) {
        i = k;
        break;
      }
    }
    const std::size_t j = (i + 1) % n;
    const double a_end = j == 0 ? angles_[0] + kTwoPi : angles_[j];
    const double h = a_end - angles_[i];
    const double s = (a - angles_[i]) / h;
    const double h00 = 2 * s * s * s - 3 * s * s + 1;
    const double h10 = s * s * s - 2 * s * s + s;
    const double h01 = -2 * s * s * s + 3 * s * s;
    const double h11 = s * s * s - s * s;
    return h00 * radii_[i] + h10 * h * slopes_[i] + h01 * radii_[j] + h11 * h * slopes_[j];
  }

 private:
  std::vector<double> angles_;
  std::vector<double> radii_;
  std::vector<double> slopes_;
};

// Pixels whose centres lie within half the thickness of the polyline.
Mask rasterize_stroke(const std::vector<Vec2>& path, double thickness, int size) {
  Mask mask(size, size);
  const double r = thickness / 2.0;
  auto mark = [&](Vec2 a, Vec2 b) {
    const int x0 = std::max(0, static_cast<int>(std::floor(std::min(a.x, b.x) - r - 1)));
    const int x1 = std::min(size - 1, static_cast<int>(std::ceil(std::max(a.x, b.x) + r + 1)));
    const int y0 = std::max(0, static_cast<int>(std::floor(std::min(a.y, b.y) - r - 1)));
    const int y1 = std::min(size - 1, static_cast<int>(std::ceil(std::max(a.y, b.y) + r + 1)));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        if (point_segment_distance({x + 0.5, y + 0.5}, a, b) <= r) mask.set(x, y, true);
      }
    }
  };
  if (path.size() == 1) mark(path[0], path[0]);
  for (std::size_t i = 0; i + 1 < path.size(); ++i) mark(path[i], path[i + 1]);
  return mask;
}

// Centripetal Catmull-Rom through the control points with reflected phantom
// end points.
std::vector<Vec2> catmull_rom(const std::vector<Vec2>& pts) {
  const std::size_t n = pts.size();
  if (n < 3) return pts;
  std::vector<Vec2> ext;
  ext.reserve(n + 2);
  ext.push_back(2.0 * pts[0] - pts[1]);
  ext.insert(ext.end(), pts.begin(), pts.end());
  ext.push_back(2.0 * pts[n - 1] - pts[n - 2]);

  std::vector<Vec2> out;
  out.push_back(pts[0]);
  for (std::size_t seg = 0; seg + 1 < n; ++seg) {
    const Vec2 p0 = ext[seg], p1 = ext[seg + 1], p2 = ext[seg + 2], p3 = ext[seg + 3];
    const double t0 = 0.0;
    const double t1 = t0 + std::sqrt(std::max(norm(p1 - p0), 1e-9));
    const double t2 = t1 + std::sqrt(std::max(norm(p2 - p1), 1e-9));
    const double t3 = t2 + std::sqrt(std::max(norm(p3 - p2), 1e-9));
    const int samples = std::max(2, static_cast<int>(std::ceil(norm(p2 - p1))));
    for (int k = 1; k <= samples; ++k) {
      const double t = t1 + (t2 - t1) * k / samples;
      const Vec2 a1 = ((t1 - t) / (t1 - t0)) * p0 + ((t - t0) / (t1 - t0)) * p1;
      const Vec2 a2 = ((t2 - t) / (t2 - t1)) * p1 + ((t - t1) / (t2 - t1)) * p2;
      const Vec2 a3 = ((t3 - t) / (t3 - t2)) * p2 + ((t - t2) / (t3 - t2)) * p3;
      const Vec2 b1 = ((t2 - t) / (t2 - t0)) * a1 + ((t - t0) / (t2 - t0)) * a2;
      const Vec2 b2 = ((t3 - t) / (t3 - t1)) * a2 + ((t - t1) / (t3 - t1)) * a3;
      out.push_back(((t2 - t) / (t2 - t1)) * b1 + ((t - t1) / (t2 - t1)) * b2);
    }
  }
  return out;
}

// A stroke path is usable when it stays inside the canvas and never comes
// back within `clearance` of itself.
bool path_is_clean(const std::vector<Vec2>& path, double clearance, double lo, double hi) {
  std::vector<double> arc(path.size(), 0.0);
  for (std::size_t i = 1; i < path.size(); ++i) arc[i] = arc[i - 1] + norm(path[i] - path[i - 1]);
  for (const Vec2& p : path) {
    if (p.x < lo || p.y < lo || p.x > hi || p.y > hi) return false;
  }
  for (std::size_t i = 0; i < path.size(); ++i) {
    for (std::size_t j = i + 1; j < path.size(); ++j) {
      if (arc[j] - arc[i] > 3.0 * clearance && norm(path[j] - path[i]) < clearance) return false;
    }
  }
  return true;
}

double path_extent(const std::vector<Vec2>& path) {
  double lo_x = path[0].x, hi_x = path[0].x, lo_y = path[0].y, hi_y = path[0].y;
  for (const Vec2& p : path) {
    lo_x = std::min(lo_x, p.x);
    hi_x = std::max(hi_x, p.x);
    lo_y = std::min(lo_y, p.y);
    hi_y = std::max(hi_y, p.y);
  }
  return std::hypot(hi_x - lo_x, hi_y - lo_y);
}

std::vector<std::pair<int, int>> boundary_pixels(const Mask& m) {
  std::vector<std::pair<int, int>> out;
  for (int y = 0; y < m.height(); ++y) {
    for (int x = 0; x < m.width(); ++x) {
      if (m.at(x, y) && (!m.get(x - 1, y) || !m.get(x + 1, y) || !m.get(x, y - 1) || !m.get(x, y + 1))) {
        out.emplace_back(x, y);
      }
    }
  }
  return out;
}

}  // namespace

std::string_view to_string(StimulusKind kind) {
  switch (kind) {
    case StimulusKind::blob: return "blob";
    case StimulusKind::curve: return "curve";
    case StimulusKind::binding_pair: return "binding_pair";
    case StimulusKind::ingested: return "ingested";
  }
  return "unknown";
}

StimulusKind parse_stimulus_kind(std::string_view text) {
  if (text == "blob") return StimulusKind::blob;
  if (text == "curve") return StimulusKind::curve;
  if (text == "binding_pair") return StimulusKind::binding_pair;
  if (text == "ingested") return StimulusKind::ingested;
  throw ConfigError("unknown stimulus kind '" + std::string(text) + "'");
}

std::string_view to_string(ShapeKind kind) { return kind == ShapeKind::blob ? "blob" : "curve"; }

Stimulus gen_blob(std::uint64_t seed, const BlobParams& p) {
  check_palette(p.palette);
  if (p.complexity < 3) throw ConfigError("blob complexity must be at least 3 radial points");
  if (!(p.radius > 0) || 2.0 * p.radius + 2.0 > kCanvasSize) {
    throw ConfigError("blob radius " + std::to_string(p.radius) + " does not fit the canvas");
  }
  if (p.radius_spread < 0 || p.radius_spread >= 1) throw ConfigError("radius_spread must be in [0, 1)");
  if (p.angle_jitter < 0 || p.angle_jitter >= 0.5) throw ConfigError("angle_jitter must be in [0, 0.5)");

  Rng rng(seed);
  const auto [fg, bg] = pick_colors(rng, p.palette);
  const double lo = p.radius + 1.0;
  const double hi = kCanvasSize - p.radius - 1.0;
  const double cx = rng.uniform(lo, hi);
  const double cy = rng.uniform(lo, hi);

  const double phase = rng.uniform(0.0, kTwoPi);
  const double spacing = kTwoPi / p.complexity;
  std::vector<double> angles(p.complexity);
  std::vector<double> radii(p.complexity);
  for (int i = 0; i < p.complexity; ++i) {
    const double jitter = p.angle_jitter > 0 ? rng.uniform(-p.angle_jitter, p.angle_jitter) : 0.0;
    angles[i] = phase + (i + jitter) * spacing;
    radii[i] = p.radius_spread > 0 ? p.radius * rng.uniform(1.0 - p.radius_spread, 1.0) : p.radius;
  }
  const RadialProfile profile(angles, radii);

  Mask mask(kCanvasSize, kCanvasSize);
  for (int y = 0; y < kCanvasSize; ++y) {
    for (int x = 0; x < kCanvasSize; ++x) {
      const double dx = x + 0.5 - cx;
      const double dy = y + 0.5 - cy;
      const double r = std::clamp(profile(std::atan2(dy, dx)), 0.0, p.radius);
      if (std::hypot(dx, dy) <= r) mask.set(x, y, true);
    }
  }
  if (!mask.any()) throw GenerationError("blob rasterized to an empty mask");

  Stimulus s = paint_single(mask, fg, bg, StimulusKind::blob, seed);
  s.params["center"] = {cx, cy};
  s.params["radius"] = p.radius;
  s.params["complexity"] = p.complexity;
  s.params["angles"] = angles;
  s.params["radii"] = radii;
  return s;
}

Stimulus gen_curve(std::uint64_t seed, const CurveParams& p) {
  check_palette(p.palette);
  if (p.n_points < 2) throw ConfigError("a curve needs at least 2 points");
  if (!(p.step_min > 0) || p.step_max < p.step_min) throw ConfigError("invalid curve step bounds");
  if (!(p.thickness > 0)) throw ConfigError("curve thickness must be positive");
  if (p.turn_bound < 0) throw ConfigError("turn bound must be non-negative");
  if (2.0 * p.margin >= kCanvasSize) throw ConfigError("curve margin leaves no safe window");

  Rng rng(seed);
  const auto [fg, bg] = pick_colors(rng, p.palette);
  const double lo = p.margin;
  const double hi = kCanvasSize - p.margin;
  constexpr int kAttemptsPerPoint = 10;

  std::vector<Vec2> pts;
  std::vector<double> turns;
  int draws = 0;
  bool done = false;
  while (!done) {
    pts = {{rng.uniform(lo, hi), rng.uniform(lo, hi)}};
    turns.clear();
    double heading = 0.0;
    bool stuck = false;
    for (int i = 1; i < p.n_points && !stuck; ++i) {
      bool placed = false;
      for (int attempt = 0; attempt < kAttemptsPerPoint && !placed; ++attempt) {
        if (++draws > p.retry_budget) {
          throw GenerationError("curve generation exhausted its retry budget of " + std::to_string(p.retry_budget) +
                                " candidate points");
        }
        // The first segment's direction is free; later ones turn by a bounded angle.
        const double turn = i == 1 ? 0.0 : rng.uniform(-p.turn_bound, p.turn_bound);
        const double step = rng.uniform(p.step_min, p.step_max);
        const double h = i == 1 ? rng.uniform(0.0, kTwoPi) : heading + turn;
        const Vec2 last = pts.back();
        const Vec2 cand{last.x + step * std::cos(h), last.y + step * std::sin(h)};
        if (cand.x < lo || cand.y < lo || cand.x > hi || cand.y > hi) continue;
        bool ok = true;
        for (std::size_t k = 0; k + 1 < pts.size() && ok; ++k) {
          if (norm(cand - pts[k]) < p.min_spacing) ok = false;
        }
        for (std::size_t k = 0; k + 2 < pts.size() && ok; ++k) {
          if (segment_distance(last, cand, pts[k], pts[k + 1]) < p.min_spacing) ok = false;
        }
        if (!ok) continue;
        pts.push_back(cand);
        if (i > 1) turns.push_back(turn);
        heading = h;
        placed = true;
      }
      stuck = !placed;
    }
    done = !stuck;
  }

  std::vector<Vec2> path = catmull_rom(pts);
  std::string stroke = "spline";
  const double half = p.thickness / 2.0;
  if (path_extent(path) < 2.0 * p.thickness) {
    path = {pts.front(), pts.back()};
    stroke = "segment";
  } else if (!path_is_clean(path, p.thickness + 1.0, half, kCanvasSize - half)) {
    path = pts;
    stroke = "polyline";
  }

  Mask mask = rasterize_stroke(path, p.thickness, kCanvasSize);
  if (!mask.any()) throw GenerationError("curve rasterized to an empty mask");

  Stimulus s = paint_single(mask, fg, bg, StimulusKind::curve, seed);
  nlohmann::json points = nlohmann::json::array();
  for (const Vec2& v : pts) points.push_back({v.x, v.y});
  s.params["control_points"] = points;
  s.params["turn_angles"] = turns;
  s.params["turn_bound"] = p.turn_bound;
  s.params["thickness"] = p.thickness;
  s.params["stroke"] = stroke;
  return s;
}

double mask_distance(const Mask& a, const Mask& b) {
  for (std::size_t i = 0; i < a.bits().size() && i < b.bits().size(); ++i) {
    if (a.bits()[i] && b.bits()[i]) return 0.0;
  }
  const auto ba = boundary_pixels(a);
  const auto bb = boundary_pixels(b);
  double best = std::numeric_limits<double>::infinity();
  for (const auto& [ax, ay] : ba) {
    for (const auto& [bx, by] : bb) {
      const double d2 = double(ax - bx) * (ax - bx) + double(ay - by) * (ay - by);
      best = std::min(best, d2);
    }
  }
  return std::sqrt(best);
}

Stimulus gen_binding_pair(std::uint64_t seed, const BindingParams& p) {
  if (!(p.gap_min > 0) || p.gap_max < p.gap_min) throw ConfigError("invalid binding gap bounds");
  Rng rng(seed);
  const std::uint64_t shape_seed = derive_seed(seed, "binding-shape");
  const Stimulus shape =
      p.shape == ShapeKind::blob ? gen_blob(shape_seed, p.blob) : gen_curve(shape_seed, p.curve);
  const Mask& base = shape.object_masks.front();

  int min_x = kCanvasSize, min_y = kCanvasSize, max_x = -1, max_y = -1;
  for (int y = 0; y < kCanvasSize; ++y) {
    for (int x = 0; x < kCanvasSize; ++x) {
      if (base.at(x, y)) {
        min_x = std::min(min_x, x);
        max_x = std::max(max_x, x);
        min_y = std::min(min_y, y);
        max_y = std::max(max_y, y);
      }
    }
  }
  const int w = max_x - min_x + 1;
  const int h = max_y - min_y + 1;
  Mask crop(w, h);
  std::vector<std::pair<int, int>> pixels;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (base.at(min_x + x, min_y + y)) {
        crop.set(x, y, true);
        pixels.emplace_back(x, y);
      }
    }
  }
  const auto edge = boundary_pixels(crop);

  auto overlaps = [&](int vx, int vy) {
    for (const auto& [x, y] : pixels) {
      if (crop.get(x - vx, y - vy)) return true;
    }
    return false;
  };
  auto distance = [&](int vx, int vy) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& [ax, ay] : edge) {
      for (const auto& [bx, by] : edge) {
        const double dx = ax - (bx + vx);
        const double dy = ay - (by + vy);
        best = std::min(best, dx * dx + dy * dy);
      }
    }
    return std::sqrt(best);
  };

  for (int attempt = 0; attempt < p.retry_budget; ++attempt) {
    const double phi = rng.uniform(0.0, kTwoPi);
    const double target_gap = rng.uniform(p.gap_min, p.gap_max);
    int vx = 0, vy = 0;
    double gap = 0;
    bool found = false;
    int last_vx = 0, last_vy = 0;
    for (double s = 0.5; s < 2.0 * kCanvasSize; s += 0.5) {
      vx = static_cast<int>(std::lround(s * std::cos(phi)));
      vy = static_cast<int>(std::lround(s * std::sin(phi)));
      if (vx == last_vx && vy == last_vy) continue;
      last_vx = vx;
      last_vy = vy;
      if (w + std::abs(vx) > kCanvasSize || h + std::abs(vy) > kCanvasSize) break;
      if (overlaps(vx, vy)) continue;
      gap = distance(vx, vy);
      if (gap >= target_gap) {
        found = true;
        break;
      }
    }
    if (!found || gap < p.gap_min || gap > p.gap_max) continue;

    const int union_w = w + std::abs(vx);
    const int union_h = h + std::abs(vy);
    const int ox = rng.uniform_int(0, kCanvasSize - union_w);
    const int oy = rng.uniform_int(0, kCanvasSize - union_h);
    const int ax = ox + std::max(0, -vx);
    const int ay = oy + std::max(0, -vy);

    Mask first(kCanvasSize, kCanvasSize), second(kCanvasSize, kCanvasSize);
    for (const auto& [x, y] : pixels) {
      first.set(ax + x, ay + y, true);
      second.set(ax + vx + x, ay + vy + y, true);
    }

    Stimulus s;
    s.kind = StimulusKind::binding_pair;
    s.seed = seed;
    s.background = shape.background;
    s.image = Image(kCanvasSize, kCanvasSize, shape.background);
    const Rgb fg = shape.image.at(min_x + pixels.front().first, min_y + pixels.front().second);
    for (int y = 0; y < kCanvasSize; ++y) {
      for (int x = 0; x < kCanvasSize; ++x) {
        if (first.at(x, y) || second.at(x, y)) s.image.set(x, y, fg);
      }
    }
    s.object_masks = {std::move(first), std::move(second)};
    s.params = shape.params;
    s.params["shape"] = std::string(to_string(p.shape));
    s.params["offset"] = {vx, vy};
    s.params["gap"] = gap;
    s.params["first_origin"] = {ax, ay};
    return s;
  }
  throw GenerationError("binding pair placement failed after " + std::to_string(p.retry_budget) + " attempts");
}

std::optional<std::string> check_binding_pair(const Stimulus& stim, double gap_min, double gap_max) {
  if (stim.object_masks.size() != 2) return "expected 2 objects, found " + std::to_string(stim.object_masks.size());
  const Mask& a = stim.object_masks[0];
  const Mask& b = stim.object_masks[1];
  if (!a.any() || !b.any()) return "empty object mask";
  if (!stim.params.contains("offset")) return "no recorded offset";
  const int vx = stim.params["offset"][0].get<int>();
  const int vy = stim.params["offset"][1].get<int>();
  for (int y = 0; y < a.height(); ++y) {
    for (int x = 0; x < a.width(); ++x) {
      if (a.at(x, y) && b.at(x, y)) return "objects overlap";
      if (b.at(x, y) != a.get(x - vx, y - vy)) return "second mask is not the first moved by the offset";
      if (b.at(x, y) && stim.image.at(x, y) != stim.image.at(x - vx, y - vy)) return "object pixels differ";
      if (!a.at(x, y) && !b.at(x, y) && stim.image.at(x, y) != stim.background) return "background pixel altered";
    }
  }
  const double gap = mask_distance(a, b);
  if (gap < gap_min || gap > gap_max) return "gap " + std::to_string(gap) + " outside bounds";
  return std::nullopt;
}

}  // namespace gestalt
