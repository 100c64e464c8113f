#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <vector>

namespace gestalt {

struct Rgb {
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;

  friend auto operator<=>(const Rgb&, const Rgb&) = default;
};

// Interleaved 8-bit RGB raster, row-major.
class Image {
 public:
  Image() = default;
  Image(int width, int height, Rgb fill = {});

  int width() const { return width_; }
  int height() const { return height_; }
  bool empty() const { return data_.empty(); }

  Rgb at(int x, int y) const {
    const std::size_t i = index(x, y);
    return {data_[i], data_[i + 1], data_[i + 2]};
  }
  void set(int x, int y, Rgb c) {
    const std::size_t i = index(x, y);
    data_[i] = c.r;
    data_[i + 1] = c.g;
    data_[i + 2] = c.b;
  }
  bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < width_ && y < height_; }

  const std::vector<std::uint8_t>& bytes() const { return data_; }
  std::vector<std::uint8_t>& bytes() { return data_; }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  std::size_t index(int x, int y) const {
    return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x)) * 3;
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> data_;
};

// Binary H x W mask, one byte per pixel (0 or 1).
class Mask {
 public:
  Mask() = default;
  Mask(int width, int height, bool fill = false);

  int width() const { return width_; }
  int height() const { return height_; }

  bool at(int x, int y) const { return bits_[index(x, y)] != 0; }
  // Out-of-range reads are false.
  bool get(int x, int y) const { return contains(x, y) && at(x, y); }
  void set(int x, int y, bool v) { bits_[index(x, y)] = v ? 1 : 0; }
  bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < width_ && y < height_; }

  std::size_t count() const;
  bool any() const { return count() > 0; }

  const std::vector<std::uint8_t>& bits() const { return bits_; }

  friend bool operator==(const Mask&, const Mask&) = default;

 private:
  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> bits_;
};

// Single-channel 8-bit raster (segmentation label maps).
class GrayImage {
 public:
  GrayImage() = default;
  GrayImage(int width, int height, std::uint8_t fill = 0);

  int width() const { return width_; }
  int height() const { return height_; }
  std::uint8_t at(int x, int y) const { return data_[index(x, y)]; }
  void set(int x, int y, std::uint8_t v) { data_[index(x, y)] = v; }
  const std::vector<std::uint8_t>& bytes() const { return data_; }
  std::vector<std::uint8_t>& bytes() { return data_; }

 private:
  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> data_;
};

// Square-patch helpers. Patches are addressed by (row, col) of the grid and
// quarter turns are counter-clockwise.
Image extract_region(const Image& image, int x0, int y0, int size, Rgb outside);
void paste_region(Image& image, const Image& region, int x0, int y0);
Image rotate_quarter_turns(const Image& square, int quarter_turns);
Mask rotate_quarter_turns(const Mask& square, int quarter_turns);
Mask extract_region(const Mask& mask, int x0, int y0, int size);
void paste_region(Mask& mask, const Mask& region, int x0, int y0);

}  // namespace gestalt
