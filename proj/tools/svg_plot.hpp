#pragma once

// Minimal SVG charts for the optional --plot artifacts.

#include <algorithm>
#include <cstdio>
#include <string>
#include <vector>

namespace ldpf::plot {

struct Bar {
  std::string label;
  double value = 0.0;
};

struct Series {
  std::string label;
  std::vector<double> values;
};

inline std::string escape(const std::string& text) {
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

inline std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

/// Vertical bars on a [0, 1] axis.
inline std::string bar_chart(const std::string& title, const std::vector<Bar>& bars) {
  const double width = 80.0 + 90.0 * static_cast<double>(bars.size());
  const double height = 320.0;
  const double top = 40.0, bottom = 260.0, left = 50.0;
  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt("%.0f", width) + "\" height=\"" +
                  fmt("%.0f", height) + "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  s += "<text x=\"" + fmt("%.0f", width / 2) + "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" +
       escape(title) + "</text>\n";
  for (int tick = 0; tick <= 4; ++tick) {
    const double y = bottom - (bottom - top) * tick / 4.0;
    s += "<line x1=\"" + fmt("%.0f", left) + "\" x2=\"" + fmt("%.0f", width - 20) + "\" y1=\"" + fmt("%.1f", y) +
         "\" y2=\"" + fmt("%.1f", y) + "\" stroke=\"#ddd\"/>\n";
    s += "<text x=\"" + fmt("%.0f", left - 6) + "\" y=\"" + fmt("%.1f", y + 4) + "\" text-anchor=\"end\">" +
         fmt("%.2f", tick / 4.0) + "</text>\n";
  }
  for (std::size_t i = 0; i < bars.size(); ++i) {
    const double v = std::clamp(bars[i].value, 0.0, 1.0);
    const double x = left + 20.0 + 90.0 * static_cast<double>(i);
    const double h = (bottom - top) * v;
    s += "<rect x=\"" + fmt("%.1f", x) + "\" y=\"" + fmt("%.1f", bottom - h) + "\" width=\"60\" height=\"" +
         fmt("%.1f", h) + "\" fill=\"#4878a8\"/>\n";
    s += "<text x=\"" + fmt("%.1f", x + 30) + "\" y=\"" + fmt("%.1f", bottom - h - 4) +
         "\" text-anchor=\"middle\">" + fmt("%.3f", bars[i].value) + "</text>\n";
    s += "<text x=\"" + fmt("%.1f", x + 30) + "\" y=\"" + fmt("%.1f", bottom + 16) +
         "\" text-anchor=\"middle\">" + escape(bars[i].label) + "</text>\n";
  }
  s += "</svg>\n";
  return s;
}

/// Polylines over a shared x index, y scaled to the data range.
inline std::string line_chart(const std::string& title, const std::vector<Series>& series) {
  static const char* colors[] = {"#4878a8", "#d0703c", "#5a9a4c", "#a04c8c", "#777777"};
  const double width = 560.0, height = 320.0, top = 40.0, bottom = 270.0, left = 60.0, right = 420.0;
  double lo = 0.0, hi = 0.0;
  std::size_t n = 0;
  bool first = true;
  for (const Series& se : series)
    for (double v : se.values) {
      lo = first ? v : std::min(lo, v);
      hi = first ? v : std::max(hi, v);
      first = false;
      n = std::max(n, se.values.size());
    }
  if (hi - lo < 1e-12) hi = lo + 1.0;
  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt("%.0f", width) + "\" height=\"" +
                  fmt("%.0f", height) + "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  s += "<text x=\"" + fmt("%.0f", width / 2) + "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" +
       escape(title) + "</text>\n";
  s += "<text x=\"" + fmt("%.0f", left - 6) + "\" y=\"" + fmt("%.0f", top + 4) + "\" text-anchor=\"end\">" +
       fmt("%.3g", hi) + "</text>\n";
  s += "<text x=\"" + fmt("%.0f", left - 6) + "\" y=\"" + fmt("%.0f", bottom + 4) + "\" text-anchor=\"end\">" +
       fmt("%.3g", lo) + "</text>\n";
  s += "<rect x=\"" + fmt("%.0f", left) + "\" y=\"" + fmt("%.0f", top) + "\" width=\"" + fmt("%.0f", right - left) +
       "\" height=\"" + fmt("%.0f", bottom - top) + "\" fill=\"none\" stroke=\"#999\"/>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const Series& se = series[k];
    const char* color = colors[k % 5];
    std::string points;
    for (std::size_t i = 0; i < se.values.size(); ++i) {
      const double x = left + (n > 1 ? (right - left) * static_cast<double>(i) / static_cast<double>(n - 1) : 0.0);
      const double y = bottom - (bottom - top) * (se.values[i] - lo) / (hi - lo);
      points += fmt("%.1f", x) + "," + fmt("%.1f", y) + " ";
    }
    s += "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"1.5\" points=\"" + points +
         "\"/>\n";
    const double ly = top + 14.0 * static_cast<double>(k);
    s += "<rect x=\"" + fmt("%.0f", right + 12) + "\" y=\"" + fmt("%.0f", ly) + "\" width=\"10\" height=\"10\" fill=\"" +
         color + "\"/>\n";
    s += "<text x=\"" + fmt("%.0f", right + 26) + "\" y=\"" + fmt("%.0f", ly + 9) + "\">" + escape(se.label) +
         "</text>\n";
  }
  s += "</svg>\n";
  return s;
}

}  // namespace ldpf::plot
