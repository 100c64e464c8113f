#pragma once

#include <array>
#include <optional>
#include <string_view>
#include <vector>

#include "gestalt/image.hpp"

namespace gestalt {

enum class ColorName { red, blue, green, yellow, purple, orange, brown, pink, gray, black, white };

struct Color {
  ColorName name;
  Rgb rgb;

  friend bool operator==(const Color&, const Color&) = default;
};

// Fixed RGB values for the eleven named stimulus colors:
//
//   red    (255,   0,   0)   purple (128,   0, 128)   gray  (128, 128, 128)
//   blue   (  0,   0, 255)   orange (255, 165,   0)   black (  0,   0,   0)
//   green  (  0, 128,   0)   brown  (139,  69,  19)   white (255, 255, 255)
//   yellow (255, 255,   0)   pink   (255, 192, 203)
const std::array<Color, 11>& palette_table();

std::vector<Color> full_palette();
Color color(ColorName name);
std::string_view to_string(ColorName name);
std::optional<ColorName> parse_color_name(std::string_view text);

}  // namespace gestalt
