#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace gestalt {

// Minimal SVG charts. Output is deterministic for equal input.

struct HeatmapSpec {
  std::string title;
  std::string row_label = "layer";
  std::string col_label = "head";
  // Colour scale bounds; unset uses the data range.
  std::optional<double> lo;
  std::optional<double> hi;
};
std::string heatmap_svg(const Eigen::MatrixXd& values, const HeatmapSpec& spec);

struct LineSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};
struct LineSpec {
  std::string title;
  std::string x_label;
  std::string y_label;
  // Dashed horizontal reference line.
  std::optional<double> reference;
};
std::string line_svg(std::span<const LineSeries> series, const LineSpec& spec);

struct Bar {
  std::string label;
  double value = 0.0;
  // Drawn as a shaded interval behind the bar (e.g. control IQR).
  std::optional<double> band_lo;
  std::optional<double> band_hi;
};
struct BarSpec {
  std::string title;
  std::string y_label;
};
std::string bar_svg(std::span<const Bar> bars, const BarSpec& spec);

std::string xml_escape(const std::string& text);

}  // namespace gestalt
