#pragma once

// Dependency-free text emitters for the curation plots.
//
// SVG layout: fixed 640x480 viewBox, plot area x in [70, 620], y in [20, 430],
// linear axes. Each axis gets 5 ticks evenly spaced from its minimum to its
// maximum data value, labelled with 4 significant digits. A degenerate range
// (all values equal) is padded by ±1.

#include <algorithm>
#include <array>
#include <charconv>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "kiln/fsutil.hpp"

namespace kiln::plots {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

struct Point3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
};

/// RFC-4180 style: header row, '.' decimals, LF line endings.
inline std::string csv(std::string_view header, const std::vector<std::vector<std::string>>& rows) {
  std::string out(header);
  out += '\n';
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out += ',';
      out += row[i];
    }
    out += '\n';
  }
  return out;
}

inline std::string cost_csv(const std::vector<std::pair<std::uint32_t, double>>& series) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& [it, cost] : series) rows.push_back({std::to_string(it), format_double(cost)});
  return csv("iteration,best_cost", rows);
}

inline std::string points_csv(const std::vector<Point3>& points) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& p : points)
    rows.push_back({format_double(p.x), format_double(p.y), format_double(p.z)});
  return csv("x,y,cost", rows);
}

inline std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out += c;
    }
  }
  return out;
}

inline std::string tick_label(double v) {
  std::array<char, 64> buf{};
  auto [end, ec] =
      std::to_chars(buf.data(), buf.data() + buf.size(), v, std::chars_format::general, 4);
  if (ec != std::errc{}) return "?";
  std::string s(buf.data(), end);
  return s == "-0" ? "0" : s;
}

struct Axis {
  double lo = 0.0;
  double hi = 1.0;

  static Axis fit(const std::vector<double>& values) {
    Axis a{values.front(), values.front()};
    for (double v : values) {
      a.lo = std::min(a.lo, v);
      a.hi = std::max(a.hi, v);
    }
    if (a.lo == a.hi) {
      a.lo -= 1.0;
      a.hi += 1.0;
    }
    return a;
  }

  double map(double v, double from, double to) const { return from + (v - lo) / (hi - lo) * (to - from); }
};

inline constexpr int kWidth = 640;
inline constexpr int kHeight = 480;
inline constexpr double kLeft = 70, kRight = 620, kTop = 20, kBottom = 430;
inline constexpr int kTicks = 5;

/// Line plot of `series` with a marker per point.
inline std::string line_svg(const std::vector<Point2>& series, std::string_view title,
                            std::string_view x_label, std::string_view y_label) {
  std::vector<double> xs, ys;
  for (const auto& p : series) {
    xs.push_back(p.x);
    ys.push_back(p.y);
  }
  if (xs.empty()) {
    xs.push_back(0.0);
    ys.push_back(0.0);
  }
  const Axis ax = Axis::fit(xs);
  const Axis ay = Axis::fit(ys);
  const auto px = [&](double x) { return format_fixed(ax.map(x, kLeft, kRight), 2); };
  const auto py = [&](double y) { return format_fixed(ay.map(y, kBottom, kTop), 2); };

  std::string s;
  s += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"480\" viewBox=\"0 0 640 480\">\n";
  s += "  <rect x=\"0\" y=\"0\" width=\"640\" height=\"480\" fill=\"white\"/>\n";
  s += "  <text x=\"345\" y=\"14\" text-anchor=\"middle\" font-size=\"12\">" + xml_escape(title) + "</text>\n";
  s += "  <line x1=\"70\" y1=\"430\" x2=\"620\" y2=\"430\" stroke=\"black\"/>\n";
  s += "  <line x1=\"70\" y1=\"20\" x2=\"70\" y2=\"430\" stroke=\"black\"/>\n";

  for (int i = 0; i < kTicks; ++i) {
    const double fx = ax.lo + (ax.hi - ax.lo) * i / (kTicks - 1);
    const double fy = ay.lo + (ay.hi - ay.lo) * i / (kTicks - 1);
    const std::string tx = px(fx), ty = py(fy);
    s += "  <line x1=\"" + tx + "\" y1=\"430\" x2=\"" + tx + "\" y2=\"436\" stroke=\"black\"/>\n";
    s += "  <text x=\"" + tx + "\" y=\"450\" text-anchor=\"middle\" font-size=\"10\">" +
         tick_label(fx) + "</text>\n";
    s += "  <line x1=\"64\" y1=\"" + ty + "\" x2=\"70\" y2=\"" + ty + "\" stroke=\"black\"/>\n";
    s += "  <text x=\"60\" y=\"" + ty + "\" text-anchor=\"end\" font-size=\"10\">" +
         tick_label(fy) + "</text>\n";
  }
  s += "  <text x=\"345\" y=\"472\" text-anchor=\"middle\" font-size=\"12\">" + xml_escape(x_label) + "</text>\n";
  s += "  <text x=\"16\" y=\"225\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 16 225)\">" +
       xml_escape(y_label) + "</text>\n";

  std::string pts;
  for (const auto& p : series) {
    if (!pts.empty()) pts += ' ';
    pts += px(p.x) + "," + py(p.y);
  }
  s += "  <polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" points=\"" + pts + "\"/>\n";
  for (const auto& p : series)
    s += "  <circle cx=\"" + px(p.x) + "\" cy=\"" + py(p.y) + "\" r=\"3\" fill=\"steelblue\"/>\n";
  s += "</svg>\n";
  return s;
}

}  // namespace kiln::plots
