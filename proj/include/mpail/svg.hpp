#pragma once

// Minimal SVG line and scatter plots. Output depends only on the inputs:
// fixed number formatting, no timestamps, no ids.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "mpail/common.hpp"

namespace mpail::svg {

struct Series {
  std::string label;
  std::vector<double> x, y;
  std::string color = "#1f77b4";
  std::vector<std::string> point_colors;  // scatter only; overrides color per point
  bool line = true;
  double width = 1.5;
  double opacity = 1.0;
};

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", std::abs(v) < 1e-12 ? 0.0 : v);
  return buf;
}

inline std::string escape(const std::string& s) {
  std::string o;
  for (char c : s) {
    switch (c) {
      case '&': o += "&amp;"; break;
      case '<': o += "&lt;"; break;
      case '>': o += "&gt;"; break;
      case '"': o += "&quot;"; break;
      default: o += c;
    }
  }
  return o;
}

/// Blue (t = 0) to red (t = 1) through yellow.
inline std::string color_map(double t) {
  if (!std::isfinite(t)) t = 1.0;
  t = std::clamp(t, 0.0, 1.0);
  const double r = t < 0.5 ? 2 * t : 1.0;
  const double g = t < 0.5 ? 0.4 + 1.2 * t : 2.0 * (1.0 - t);
  const double b = t < 0.5 ? 1.0 - 2 * t : 0.0;
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", int(std::lround(255 * r)), int(std::lround(255 * std::min(g, 1.0))),
                int(std::lround(255 * b)));
  return buf;
}

/// Roughly n "nice" tick positions covering [lo, hi].
inline std::vector<double> ticks(double lo, double hi, int n = 5) {
  const double span = hi - lo;
  const double raw = span / n;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 5.0, 10.0})
    if (m * mag >= raw) {
      step = m * mag;
      break;
    }
  std::vector<double> out;
  for (double v = std::ceil(lo / step) * step; v <= hi + 1e-9 * span; v += step) out.push_back(v);
  return out;
}

struct Figure {
  std::string title;
  std::string xlabel;
  std::string ylabel;
  std::vector<Series> series;
  int width = 640;
  int height = 480;
  bool equal_aspect = false;

  std::string render() const {
    double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
    for (const auto& s : series)
      for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
        if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
        x0 = std::min(x0, s.x[i]);
        x1 = std::max(x1, s.x[i]);
        y0 = std::min(y0, s.y[i]);
        y1 = std::max(y1, s.y[i]);
      }
    if (!(x0 <= x1)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
    if (x1 - x0 < 1e-12) x0 -= 0.5, x1 += 0.5;
    if (y1 - y0 < 1e-12) y0 -= 0.5, y1 += 0.5;
    const double px = 0.04 * (x1 - x0), py = 0.04 * (y1 - y0);
    x0 -= px, x1 += px, y0 -= py, y1 += py;

    const double ml = 70, mr = 20, mt = 36, mb = 50;
    double pw = width - ml - mr, ph = height - mt - mb;
    if (equal_aspect) {
      const double sx = pw / (x1 - x0), sy = ph / (y1 - y0);
      if (sx > sy) {
        const double extra = (pw / sy - (x1 - x0)) / 2;
        x0 -= extra, x1 += extra;
      } else {
        const double extra = (ph / sx - (y1 - y0)) / 2;
        y0 -= extra, y1 += extra;
      }
    }
    auto X = [&](double x) { return ml + (x - x0) / (x1 - x0) * pw; };
    auto Y = [&](double y) { return mt + (y1 - y) / (y1 - y0) * ph; };

    std::string o;
    o += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(width) + "\" height=\"" +
         std::to_string(height) + "\" viewBox=\"0 0 " + std::to_string(width) + " " + std::to_string(height) + "\">\n";
    o += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    o += "<g font-family=\"sans-serif\" font-size=\"11\">\n";
    for (double t : ticks(x0, x1)) {
      o += "<line x1=\"" + num(X(t)) + "\" y1=\"" + num(mt) + "\" x2=\"" + num(X(t)) + "\" y2=\"" + num(mt + ph) +
           "\" stroke=\"#e0e0e0\"/>\n";
      o += "<text x=\"" + num(X(t)) + "\" y=\"" + num(mt + ph + 16) + "\" text-anchor=\"middle\">" + tick_label(t) +
           "</text>\n";
    }
    for (double t : ticks(y0, y1)) {
      o += "<line x1=\"" + num(ml) + "\" y1=\"" + num(Y(t)) + "\" x2=\"" + num(ml + pw) + "\" y2=\"" + num(Y(t)) +
           "\" stroke=\"#e0e0e0\"/>\n";
      o += "<text x=\"" + num(ml - 6) + "\" y=\"" + num(Y(t) + 4) + "\" text-anchor=\"end\">" + tick_label(t) +
           "</text>\n";
    }
    o += "<rect x=\"" + num(ml) + "\" y=\"" + num(mt) + "\" width=\"" + num(pw) + "\" height=\"" + num(ph) +
         "\" fill=\"none\" stroke=\"black\"/>\n";
    if (!title.empty())
      o += "<text x=\"" + num(width / 2.0) + "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" + escape(title) +
           "</text>\n";
    if (!xlabel.empty())
      o += "<text x=\"" + num(ml + pw / 2) + "\" y=\"" + num(height - 10.0) + "\" text-anchor=\"middle\">" +
           escape(xlabel) + "</text>\n";
    if (!ylabel.empty())
      o += "<text x=\"16\" y=\"" + num(mt + ph / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " +
           num(mt + ph / 2) + ")\">" + escape(ylabel) + "</text>\n";

    int legend = 0;
    for (const auto& s : series) {
      const std::size_t n = std::min(s.x.size(), s.y.size());
      const std::string op = s.opacity < 1.0 ? " opacity=\"" + num(s.opacity) + "\"" : "";
      if (s.line) {
        std::string pts;
        auto flush = [&] {
          if (!pts.empty())
            o += "<polyline fill=\"none\" stroke=\"" + s.color + "\" stroke-width=\"" + num(s.width) + "\"" + op +
                 " points=\"" + pts + "\"/>\n";
          pts.clear();
        };
        for (std::size_t i = 0; i < n; ++i) {
          if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) {
            flush();
            continue;
          }
          pts += (pts.empty() ? "" : " ") + num(X(s.x[i])) + "," + num(Y(s.y[i]));
        }
        flush();
      } else {
        for (std::size_t i = 0; i < n; ++i) {
          if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
          const std::string& c = i < s.point_colors.size() ? s.point_colors[i] : s.color;
          o += "<circle cx=\"" + num(X(s.x[i])) + "\" cy=\"" + num(Y(s.y[i])) + "\" r=\"" + num(s.width) +
               "\" fill=\"" + c + "\"" + op + "/>\n";
        }
      }
      if (!s.label.empty()) {
        const double ly = mt + 14 + 14 * legend++;
        o += "<rect x=\"" + num(ml + pw - 120) + "\" y=\"" + num(ly - 8) + "\" width=\"10\" height=\"10\" fill=\"" +
             s.color + "\"/>\n";
        o += "<text x=\"" + num(ml + pw - 106) + "\" y=\"" + num(ly + 1) + "\">" + escape(s.label) + "</text>\n";
      }
    }
    o += "</g>\n</svg>\n";
    return o;
  }

  void save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot write " + path);
    f << render();
    if (!f) throw Error("write failed: " + path);
  }
};

}  // namespace mpail::svg
