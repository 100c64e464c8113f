#include <algorithm>
#include <array>
#include <cmath>

#include <fmt/format.h>

#include "gestalt/svg.hpp"

namespace gestalt {

namespace {

constexpr double kWidth = 640.0;
constexpr double kHeight = 420.0;
constexpr double kLeft = 70.0;
constexpr double kRight = 20.0;
constexpr double kTop = 40.0;
constexpr double kBottom = 60.0;

const std::array<const char*, 8> kPalette = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                             "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

std::string header(double w, double h, const std::string& title) {
  return fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{:.0f}\" height=\"{:.0f}\" viewBox=\"0 0 {:.0f} {:.0f}\" "
      "font-family=\"sans-serif\" font-size=\"11\">\n"
      "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      "<text class=\"title\" x=\"{:.1f}\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
      w, h, w, h, w / 2.0, xml_escape(title));
}

std::string axis_labels(const std::string& x_label, const std::string& y_label, double w, double h) {
  return fmt::format(
      "<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"middle\">{}</text>\n"
      "<text x=\"16\" y=\"{:.1f}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {:.1f})\">{}</text>\n",
      kLeft + (w - kLeft - kRight) / 2.0, h - 14.0, xml_escape(x_label), kTop + (h - kTop - kBottom) / 2.0,
      kTop + (h - kTop - kBottom) / 2.0, xml_escape(y_label));
}

// Piecewise-linear blue-white-red scale on [0, 1].
std::string scale_colour(double u) {
  u = std::clamp(std::isfinite(u) ? u : 0.0, 0.0, 1.0);
  double r, g, b;
  if (u < 0.5) {
    const double s = u / 0.5;
    r = 49 + s * (247 - 49);
    g = 54 + s * (247 - 54);
    b = 149 + s * (247 - 149);
  } else {
    const double s = (u - 0.5) / 0.5;
    r = 247 + s * (165 - 247);
    g = 247 + s * (0 - 247);
    b = 247 + s * (38 - 247);
  }
  return fmt::format("#{:02x}{:02x}{:02x}", static_cast<int>(std::lround(r)), static_cast<int>(std::lround(g)),
                     static_cast<int>(std::lround(b)));
}

std::string tick(double v) { return fmt::format("{:.3g}", v); }

struct Range {
  double lo;
  double hi;
  double map(double v, double a, double b) const { return hi > lo ? a + (v - lo) / (hi - lo) * (b - a) : (a + b) / 2; }
};

Range padded(double lo, double hi) {
  if (!(hi > lo)) return {lo - 0.5, hi + 0.5};
  const double pad = 0.05 * (hi - lo);
  return {lo - pad, hi + pad};
}

}  // namespace

std::string xml_escape(const std::string& text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string heatmap_svg(const Eigen::MatrixXd& values, const HeatmapSpec& spec) {
  const auto rows = values.rows();
  const auto cols = values.cols();
  const double cell = 28.0;
  const double w = kLeft + cols * cell + 90.0;
  const double h = kTop + rows * cell + kBottom;
  const bool any = values.size() > 0;
  double lo = spec.lo.value_or(any ? values.minCoeff() : 0.0);
  double hi = spec.hi.value_or(any ? values.maxCoeff() : 1.0);
  if (!(hi > lo)) hi = lo + 1.0;

  std::string out = header(w, h, spec.title);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      const double v = values(r, c);
      out += fmt::format(
          "<rect class=\"cell\" x=\"{:.1f}\" y=\"{:.1f}\" width=\"{:.1f}\" height=\"{:.1f}\" fill=\"{}\">"
          "<title>{} {}, {} {}: {:.4g}</title></rect>\n",
          kLeft + c * cell, kTop + r * cell, cell, cell, scale_colour((v - lo) / (hi - lo)), spec.row_label, r,
          spec.col_label, c, v);
    }
    out += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"end\">{}</text>\n", kLeft - 6.0,
                       kTop + r * cell + cell * 0.65, r);
  }
  for (Eigen::Index c = 0; c < cols; ++c)
    out += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"middle\">{}</text>\n", kLeft + c * cell + cell / 2,
                       kTop + rows * cell + 14.0, c);
  out += axis_labels(spec.col_label, spec.row_label, kLeft + cols * cell + kRight, h);

  const double bx = kLeft + cols * cell + 24.0;
  const double bh = rows * cell;
  for (int i = 0; i < 20; ++i) {
    const double u = 1.0 - (i + 0.5) / 20.0;
    out += fmt::format("<rect class=\"scale\" x=\"{:.1f}\" y=\"{:.1f}\" width=\"14\" height=\"{:.2f}\" fill=\"{}\"/>\n", bx,
                       kTop + i * bh / 20.0, bh / 20.0 + 0.5, scale_colour(u));
  }
  out += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\">{}</text>\n", bx + 18.0, kTop + 8.0, tick(hi));
  out += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\">{}</text>\n", bx + 18.0, kTop + bh, tick(lo));
  out += "</svg>\n";
  return out;
}

std::string line_svg(std::span<const LineSeries> series, const LineSpec& spec) {
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      if (!std::isfinite(s.y[i])) continue;
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
    }
  }
  if (spec.reference) {
    y0 = std::min(y0, *spec.reference);
    y1 = std::max(y1, *spec.reference);
  }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  const Range rx{x0, x1};
  const Range ry = padded(y0, y1);
  const double pl = kLeft, pr = kWidth - kRight, pt = kTop, pb = kHeight - kBottom;

  std::string out = header(kWidth, kHeight, spec.title);
  out += fmt::format("<rect x=\"{:.1f}\" y=\"{:.1f}\" width=\"{:.1f}\" height=\"{:.1f}\" fill=\"none\" stroke=\"#444\"/>\n",
                     pl, pt, pr - pl, pb - pt);
  for (int i = 0; i <= 4; ++i) {
    const double yv = ry.lo + (ry.hi - ry.lo) * i / 4.0;
    const double xv = rx.lo + (rx.hi - rx.lo) * i / 4.0;
    out += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"end\">{}</text>\n", pl - 4, ry.map(yv, pb, pt) + 4,
                       tick(yv));
    out += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"middle\">{}</text>\n", rx.map(xv, pl, pr), pb + 14,
                       tick(xv));
  }
  if (spec.reference) {
    const double y = ry.map(*spec.reference, pb, pt);
    out += fmt::format(
        "<line class=\"reference\" x1=\"{:.1f}\" y1=\"{:.1f}\" x2=\"{:.1f}\" y2=\"{:.1f}\" stroke=\"#888\" "
        "stroke-dasharray=\"4 3\"/>\n",
        pl, y, pr, y);
  }
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* colour = kPalette[k % kPalette.size()];
    std::string points;
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      if (!std::isfinite(s.y[i])) continue;
      if (!points.empty()) points += ' ';
      points += fmt::format("{:.1f},{:.1f}", rx.map(s.x[i], pl, pr), ry.map(s.y[i], pb, pt));
    }
    out += fmt::format("<polyline class=\"series\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.8\" points=\"{}\"/>\n",
                       colour, points);
    out += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" fill=\"{}\">{}</text>\n", pl + 8, pt + 14 + 13.0 * k, colour,
                       xml_escape(s.label));
  }
  out += axis_labels(spec.x_label, spec.y_label, kWidth, kHeight);
  out += "</svg>\n";
  return out;
}

std::string bar_svg(std::span<const Bar> bars, const BarSpec& spec) {
  double lo = 0.0, hi = 0.0;
  for (const auto& b : bars) {
    for (double v : {b.value, b.band_lo.value_or(b.value), b.band_hi.value_or(b.value)}) {
      if (!std::isfinite(v)) continue;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  const Range ry = padded(lo, hi);
  const double pl = kLeft, pr = kWidth - kRight, pt = kTop, pb = kHeight - kBottom;
  const double slot = bars.empty() ? 1.0 : (pr - pl) / static_cast<double>(bars.size());

  std::string out = header(kWidth, kHeight, spec.title);
  out += fmt::format("<rect x=\"{:.1f}\" y=\"{:.1f}\" width=\"{:.1f}\" height=\"{:.1f}\" fill=\"none\" stroke=\"#444\"/>\n",
                     pl, pt, pr - pl, pb - pt);
  const double zero = ry.map(0.0, pb, pt);
  out += fmt::format("<line x1=\"{:.1f}\" y1=\"{:.1f}\" x2=\"{:.1f}\" y2=\"{:.1f}\" stroke=\"#444\"/>\n", pl, zero, pr, zero);
  for (int i = 0; i <= 4; ++i) {
    const double yv = ry.lo + (ry.hi - ry.lo) * i / 4.0;
    out += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"end\">{}</text>\n", pl - 4, ry.map(yv, pb, pt) + 4,
                       tick(yv));
  }
  for (std::size_t i = 0; i < bars.size(); ++i) {
    const auto& b = bars[i];
    const double x = pl + slot * i;
    if (b.band_lo && b.band_hi) {
      const double y_hi = ry.map(*b.band_hi, pb, pt);
      const double y_lo = ry.map(*b.band_lo, pb, pt);
      out += fmt::format(
          "<rect class=\"band\" x=\"{:.1f}\" y=\"{:.1f}\" width=\"{:.1f}\" height=\"{:.1f}\" fill=\"#bbbbbb\" "
          "fill-opacity=\"0.6\"/>\n",
          x + slot * 0.1, y_hi, slot * 0.8, std::max(0.5, y_lo - y_hi));
    }
    const double y = ry.map(b.value, pb, pt);
    out += fmt::format(
        "<rect class=\"bar\" x=\"{:.1f}\" y=\"{:.1f}\" width=\"{:.1f}\" height=\"{:.1f}\" fill=\"{}\">"
        "<title>{}: {:.4g}</title></rect>\n",
        x + slot * 0.25, std::min(y, zero), slot * 0.5, std::abs(zero - y), kPalette[0], xml_escape(b.label), b.value);
    out += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"middle\">{}</text>\n", x + slot / 2, pb + 14,
                       xml_escape(b.label));
  }
  out += axis_labels("", spec.y_label, kWidth, kHeight);
  out += "</svg>\n";
  return out;
}

}  // namespace gestalt
