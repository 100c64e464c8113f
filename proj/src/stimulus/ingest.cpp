#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "gestalt/error.hpp"
#include "gestalt/png_io.hpp"
#include "gestalt/stimulus.hpp"

namespace gestalt {

Stimulus ingest_segmented(const Image& image, const GrayImage& labels) {
  if (image.width() != labels.width() || image.height() != labels.height()) {
    throw DataError("image is " + std::to_string(image.width()) + "x" + std::to_string(image.height()) +
                    " but mask is " + std::to_string(labels.width()) + "x" + std::to_string(labels.height()));
  }
  if (image.width() == 0 || image.height() == 0) throw DataError("empty image");

  const int side = std::min(image.width(), image.height());
  const int ox = (image.width() - side) / 2;
  const int oy = (image.height() - side) / 2;
  const double scale = static_cast<double>(side) / kCanvasSize;

  std::set<std::uint8_t> ids;
  for (int y = oy; y < oy + side; ++y) {
    for (int x = ox; x < ox + side; ++x) {
      if (labels.at(x, y) != 0) ids.insert(labels.at(x, y));
    }
  }
  if (ids.empty()) throw DataError("segmentation mask is empty");

  Stimulus s;
  s.kind = StimulusKind::ingested;
  s.image = Image(kCanvasSize, kCanvasSize);
  for (int y = 0; y < kCanvasSize; ++y) {
    const double sy = std::clamp((y + 0.5) * scale - 0.5, 0.0, side - 1.0);
    const int y_lo = static_cast<int>(std::floor(sy));
    const int y_hi = std::min(y_lo + 1, side - 1);
    const double fy = sy - y_lo;
    for (int x = 0; x < kCanvasSize; ++x) {
      const double sx = std::clamp((x + 0.5) * scale - 0.5, 0.0, side - 1.0);
      const int x_lo = static_cast<int>(std::floor(sx));
      const int x_hi = std::min(x_lo + 1, side - 1);
      const double fx = sx - x_lo;
      const Rgb a = image.at(ox + x_lo, oy + y_lo), b = image.at(ox + x_hi, oy + y_lo);
      const Rgb c = image.at(ox + x_lo, oy + y_hi), d = image.at(ox + x_hi, oy + y_hi);
      auto mix = [&](std::uint8_t pa, std::uint8_t pb, std::uint8_t pc, std::uint8_t pd) {
        const double top = pa * (1 - fx) + pb * fx;
        const double bottom = pc * (1 - fx) + pd * fx;
        return static_cast<std::uint8_t>(std::lround(std::clamp(top * (1 - fy) + bottom * fy, 0.0, 255.0)));
      };
      s.image.set(x, y, {mix(a.r, b.r, c.r, d.r), mix(a.g, b.g, c.g, d.g), mix(a.b, b.b, c.b, d.b)});
    }
  }

  nlohmann::json label_list = nlohmann::json::array();
  for (std::uint8_t id : ids) {
    Mask m(kCanvasSize, kCanvasSize);
    for (int y = 0; y < kCanvasSize; ++y) {
      const int sy = std::min(side - 1, static_cast<int>(std::floor((y + 0.5) * scale)));
      for (int x = 0; x < kCanvasSize; ++x) {
        const int sx = std::min(side - 1, static_cast<int>(std::floor((x + 0.5) * scale)));
        if (labels.at(ox + sx, oy + sy) == id) m.set(x, y, true);
      }
    }
    if (!m.any()) throw DataError("object label " + std::to_string(id) + " vanished after resizing");
    s.object_masks.push_back(std::move(m));
    label_list.push_back(id);
  }
  // Overhang fill for trajectories: the most frequent colour outside every object.
  std::map<std::uint32_t, std::size_t> counts;
  for (int y = 0; y < kCanvasSize; ++y) {
    for (int x = 0; x < kCanvasSize; ++x) {
      bool inside = false;
      for (const Mask& m : s.object_masks) inside = inside || m.at(x, y);
      if (inside) continue;
      const Rgb c = s.image.at(x, y);
      ++counts[(std::uint32_t{c.r} << 16) | (std::uint32_t{c.g} << 8) | c.b];
    }
  }
  if (!counts.empty()) {
    const auto best = std::max_element(counts.begin(), counts.end(),
                                       [](const auto& a, const auto& b) { return a.second < b.second; });
    s.background = {static_cast<std::uint8_t>(best->first >> 16), static_cast<std::uint8_t>(best->first >> 8),
                    static_cast<std::uint8_t>(best->first)};
  }
  s.params["labels"] = label_list;
  s.params["source_size"] = {image.width(), image.height()};
  return s;
}

Stimulus ingest_segmented(const std::string& image_path, const std::string& mask_path) {
  Stimulus s = ingest_segmented(read_png_rgb(image_path), read_png_gray(mask_path));
  s.params["source_image"] = image_path;
  s.params["source_mask"] = mask_path;
  return s;
}

}  // namespace gestalt
