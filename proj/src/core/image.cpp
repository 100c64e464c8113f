#include "gestalt/image.hpp"

#include <algorithm>

#include "gestalt/error.hpp"

namespace gestalt {

Image::Image(int width, int height, Rgb fill) : width_(width), height_(height) {
  if (width < 0 || height < 0) throw ConfigError("negative image size");
  data_.resize(static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * 3);
  for (std::size_t i = 0; i < data_.size(); i += 3) {
    data_[i] = fill.r;
    data_[i + 1] = fill.g;
    data_[i + 2] = fill.b;
  }
}

Mask::Mask(int width, int height, bool fill)
    : width_(width),
      height_(height),
      bits_(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill ? 1 : 0) {}

std::size_t Mask::count() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

GrayImage::GrayImage(int width, int height, std::uint8_t fill)
    : width_(width), height_(height), data_(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill) {}

Image extract_region(const Image& image, int x0, int y0, int size, Rgb outside) {
  Image out(size, size, outside);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      if (image.contains(x0 + x, y0 + y)) out.set(x, y, image.at(x0 + x, y0 + y));
    }
  }
  return out;
}

void paste_region(Image& image, const Image& region, int x0, int y0) {
  for (int y = 0; y < region.height(); ++y) {
    for (int x = 0; x < region.width(); ++x) {
      if (image.contains(x0 + x, y0 + y)) image.set(x0 + x, y0 + y, region.at(x, y));
    }
  }
}

Mask extract_region(const Mask& mask, int x0, int y0, int size) {
  Mask out(size, size);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) out.set(x, y, mask.get(x0 + x, y0 + y));
  }
  return out;
}

void paste_region(Mask& mask, const Mask& region, int x0, int y0) {
  for (int y = 0; y < region.height(); ++y) {
    for (int x = 0; x < region.width(); ++x) {
      if (mask.contains(x0 + x, y0 + y)) mask.set(x0 + x, y0 + y, region.at(x, y));
    }
  }
}

namespace {

// Source coordinate for a counter-clockwise rotation by k quarter turns:
// dst(x, y) = src(sx, sy).
void rotated_source(int x, int y, int n, int k, int& sx, int& sy) {
  switch (((k % 4) + 4) % 4) {
    case 0: sx = x; sy = y; break;
    case 1: sx = n - 1 - y; sy = x; break;
    case 2: sx = n - 1 - x; sy = n - 1 - y; break;
    default: sx = y; sy = n - 1 - x; break;
  }
}

}  // namespace

Image rotate_quarter_turns(const Image& square, int quarter_turns) {
  if (square.width() != square.height()) throw ConfigError("rotation needs a square region");
  const int n = square.width();
  Image out(n, n);
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      int sx = 0, sy = 0;
      rotated_source(x, y, n, quarter_turns, sx, sy);
      out.set(x, y, square.at(sx, sy));
    }
  }
  return out;
}

Mask rotate_quarter_turns(const Mask& square, int quarter_turns) {
  if (square.width() != square.height()) throw ConfigError("rotation needs a square region");
  const int n = square.width();
  Mask out(n, n);
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      int sx = 0, sy = 0;
      rotated_source(x, y, n, quarter_turns, sx, sy);
      out.set(x, y, square.at(sx, sy));
    }
  }
  return out;
}

}  // namespace gestalt
