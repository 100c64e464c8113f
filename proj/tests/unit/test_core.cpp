#include <atomic>
#include <filesystem>
#include <set>

#include <gtest/gtest.h>

#include "gestalt/error.hpp"
#include "gestalt/hash.hpp"
#include "gestalt/image.hpp"
#include "gestalt/palette.hpp"
#include "gestalt/parallel.hpp"
#include "gestalt/png_io.hpp"
#include "gestalt/random.hpp"

namespace fs = std::filesystem;
using namespace gestalt;

namespace {

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("gestalt_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST(Random, DeriveSeedIsStableAndSeparatesStreams) {
  EXPECT_EQ(derive_seed(1, "a", 0), derive_seed(1, "a", 0));
  std::set<std::uint64_t> seen;
  for (std::uint64_t root : {0ull, 1ull, 2ull})
    for (const char* tag : {"a", "b", "pairs"})
      for (std::uint64_t i = 0; i < 4; ++i) seen.insert(derive_seed(root, tag, i));
  EXPECT_EQ(seen.size(), 36u);
}

TEST(Hash, Sha256KnownVectors) {
  EXPECT_EQ(sha256_hex(std::string_view("abc")), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  EXPECT_EQ(sha256_hex(std::string_view("")), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  const fs::path dir = temp_dir("hash");
  std::FILE* f = std::fopen((dir / "x.txt").c_str(), "wb");
  std::fputs("abc", f);
  std::fclose(f);
  EXPECT_EQ(sha256_file(dir / "x.txt"), sha256_hex(std::string_view("abc")));
}

TEST(Palette, DocumentedTable) {
  EXPECT_EQ(palette_table().size(), 11u);
  EXPECT_EQ(color(ColorName::orange).rgb, (Rgb{255, 165, 0}));
  EXPECT_EQ(color(ColorName::brown).rgb, (Rgb{139, 69, 19}));
  EXPECT_EQ(color(ColorName::pink).rgb, (Rgb{255, 192, 203}));
  EXPECT_EQ(color(ColorName::green).rgb, (Rgb{0, 128, 0}));
  for (const auto& c : palette_table()) EXPECT_EQ(parse_color_name(to_string(c.name)), c.name);
  EXPECT_FALSE(parse_color_name("teal").has_value());
}

TEST(Image, QuarterTurnIsCounterClockwise) {
  Image img(2, 2);
  const Rgb a{1, 0, 0}, b{2, 0, 0}, c{3, 0, 0}, d{4, 0, 0};
  img.set(0, 0, a);
  img.set(1, 0, b);
  img.set(0, 1, c);
  img.set(1, 1, d);
  const Image r = rotate_quarter_turns(img, 1);
  EXPECT_EQ(r.at(0, 0), b);
  EXPECT_EQ(r.at(1, 0), d);
  EXPECT_EQ(r.at(0, 1), a);
  EXPECT_EQ(r.at(1, 1), c);
}

TEST(Image, FourQuarterTurnsAreIdentity) {
  Image img(5, 5);
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 5; ++x) img.set(x, y, Rgb{static_cast<std::uint8_t>(x), static_cast<std::uint8_t>(y), 7});
  Image r = img;
  for (int k = 0; k < 4; ++k) r = rotate_quarter_turns(r, 1);
  EXPECT_EQ(r, img);
  EXPECT_EQ(rotate_quarter_turns(rotate_quarter_turns(img, 3), 1), img);
}

TEST(Image, RegionOutsideCanvasUsesFill) {
  Image img(4, 4, Rgb{9, 9, 9});
  const Image r = extract_region(img, 2, 2, 4, Rgb{1, 2, 3});
  EXPECT_EQ(r.at(0, 0), (Rgb{9, 9, 9}));
  EXPECT_EQ(r.at(1, 1), (Rgb{9, 9, 9}));
  EXPECT_EQ(r.at(2, 0), (Rgb{1, 2, 3}));
  EXPECT_EQ(r.at(3, 3), (Rgb{1, 2, 3}));
  Image canvas(4, 4);
  paste_region(canvas, r, 2, 2);
  EXPECT_EQ(canvas.at(3, 3), (Rgb{9, 9, 9}));
  EXPECT_EQ(canvas.at(1, 1), (Rgb{0, 0, 0}));
}

TEST(PngIo, RoundTrips) {
  const fs::path dir = temp_dir("png");
  Image img(7, 3);
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 7; ++x)
      img.set(x, y, Rgb{static_cast<std::uint8_t>(x * 30), static_cast<std::uint8_t>(y * 80), 200});
  write_png(dir / "rgb.png", img);
  EXPECT_EQ(read_png_rgb(dir / "rgb.png"), img);

  Mask m(5, 4);
  m.set(1, 2, true);
  m.set(4, 0, true);
  write_png(dir / "mask.png", m);
  const GrayImage g = read_png_gray(dir / "mask.png");
  EXPECT_EQ(g.at(1, 2), 255);
  EXPECT_EQ(g.at(4, 0), 255);
  EXPECT_EQ(g.at(0, 0), 0);

  EXPECT_THROW(read_png_rgb(dir / "missing.png"), DataError);
}

TEST(Parallel, CoversEveryIndexOnceAndRethrows) {
  std::vector<std::atomic<int>> hits(100);
  parallel_for(hits.size(), 4, [&](std::size_t i) { ++hits[i]; });
  for (const auto& h : hits) EXPECT_EQ(h.load(), 1);
  EXPECT_THROW(parallel_for(10, 3,
                            [](std::size_t i) {
                              if (i == 5) throw DataError("boom");
                            }),
               DataError);
}
