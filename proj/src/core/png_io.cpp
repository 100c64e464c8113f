#include "gestalt/png_io.hpp"

#include <png.h>

#include <cstdio>
#include <memory>
#include <vector>

#include "gestalt/error.hpp"

namespace gestalt {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw DataError("cannot open '" + path.string() + "'");
  return f;
}

[[noreturn]] void png_fail(png_structp, png_const_charp message) { throw DataError(std::string("libpng: ") + message); }
void png_warn(png_structp, png_const_charp) {}

// Decodes into `channels` interleaved bytes per pixel (1 or 3).
std::vector<std::uint8_t> read_png(const std::filesystem::path& path, int channels, int& width, int& height) {
  FilePtr file = open_file(path, "rb");
  png_byte signature[8];
  if (std::fread(signature, 1, 8, file.get()) != 8 || png_sig_cmp(signature, 0, 8) != 0) {
    throw DataError("'" + path.string() + "' is not a PNG file");
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_fail, png_warn);
  if (!png) throw DataError("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp* p;
    png_infop* i;
    ~Guard() { png_destroy_read_struct(p, i, nullptr); }
  } guard{&png, &info};

  png_init_io(png, file.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  width = static_cast<int>(png_get_image_width(png, info));
  height = static_cast<int>(png_get_image_height(png, info));
  const int color_type = png_get_color_type(png, info);
  const int bit_depth = png_get_bit_depth(png, info);

  if (bit_depth == 16) png_set_strip_16(png);
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_set_strip_alpha(png);

  const bool is_gray = color_type == PNG_COLOR_TYPE_GRAY || color_type == PNG_COLOR_TYPE_GRAY_ALPHA;
  if (channels == 3 && is_gray) png_set_gray_to_rgb(png);
  if (channels == 1 && !is_gray) png_set_rgb_to_gray_fixed(png, 1, -1, -1);
  png_read_update_info(png, info);

  if (static_cast<int>(png_get_channels(png, info)) != channels) {
    throw DataError("unexpected channel layout in '" + path.string() + "'");
  }
  std::vector<std::uint8_t> pixels(static_cast<std::size_t>(width) * height * channels);
  std::vector<png_bytep> rows(height);
  for (int y = 0; y < height; ++y) rows[y] = pixels.data() + static_cast<std::size_t>(y) * width * channels;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  return pixels;
}

void write_png_bytes(const std::filesystem::path& path, const std::uint8_t* data, int width, int height,
                     int channels) {
  FilePtr file = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_fail, png_warn);
  if (!png) throw DataError("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp* p;
    png_infop* i;
    ~Guard() { png_destroy_write_struct(p, i); }
  } guard{&png, &info};

  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
               channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < height; ++y) {
    png_write_row(png, const_cast<png_bytep>(data + static_cast<std::size_t>(y) * width * channels));
  }
  png_write_end(png, nullptr);
}

}  // namespace

Image read_png_rgb(const std::filesystem::path& path) {
  int w = 0, h = 0;
  auto pixels = read_png(path, 3, w, h);
  Image img(w, h);
  img.bytes() = std::move(pixels);
  return img;
}

GrayImage read_png_gray(const std::filesystem::path& path) {
  int w = 0, h = 0;
  auto pixels = read_png(path, 1, w, h);
  GrayImage img(w, h);
  img.bytes() = std::move(pixels);
  return img;
}

void write_png(const std::filesystem::path& path, const Image& image) {
  write_png_bytes(path, image.bytes().data(), image.width(), image.height(), 3);
}

void write_png(const std::filesystem::path& path, const GrayImage& image) {
  write_png_bytes(path, image.bytes().data(), image.width(), image.height(), 1);
}

void write_png(const std::filesystem::path& path, const Mask& mask) {
  GrayImage g(mask.width(), mask.height());
  for (std::size_t i = 0; i < mask.bits().size(); ++i) g.bytes()[i] = mask.bits()[i] ? 255 : 0;
  write_png(path, g);
}

}  // namespace gestalt
