#include "gestalt/palette.hpp"

#include "gestalt/error.hpp"

namespace gestalt {

const std::array<Color, 11>& palette_table() {
  static const std::array<Color, 11> table = {{
      {ColorName::red, {255, 0, 0}},
      {ColorName::blue, {0, 0, 255}},
      {ColorName::green, {0, 128, 0}},
      {ColorName::yellow, {255, 255, 0}},
      {ColorName::purple, {128, 0, 128}},
      {ColorName::orange, {255, 165, 0}},
      {ColorName::brown, {139, 69, 19}},
      {ColorName::pink, {255, 192, 203}},
      {ColorName::gray, {128, 128, 128}},
      {ColorName::black, {0, 0, 0}},
      {ColorName::white, {255, 255, 255}},
  }};
  return table;
}

std::vector<Color> full_palette() { return {palette_table().begin(), palette_table().end()}; }

Color color(ColorName name) { return palette_table()[static_cast<std::size_t>(name)]; }

std::string_view to_string(ColorName name) {
  static constexpr std::string_view kNames[] = {"red",    "blue",  "green", "yellow", "purple", "orange",
                                                "brown",  "pink",  "gray",  "black",  "white"};
  return kNames[static_cast<std::size_t>(name)];
}

std::optional<ColorName> parse_color_name(std::string_view text) {
  for (const Color& c : palette_table()) {
    if (to_string(c.name) == text) return c.name;
  }
  return std::nullopt;
}

}  // namespace gestalt
