#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "usaad/core/errors.hpp"
#include "usaad/imaging.hpp"

namespace usaad {

namespace plotdetail {

struct Series {
  std::string label;
  std::array<float, 3> color;
  std::vector<double> x, y;
};

// 3x5 glyphs for tick labels.
inline const std::map<char, std::array<const char*, 5>>& glyphs() {
  static const std::map<char, std::array<const char*, 5>> g = {
      {'0', {"###", "# #", "# #", "# #", "###"}}, {'1', {" # ", "## ", " # ", " # ", "###"}},
      {'2', {"###", "  #", "###", "#  ", "###"}}, {'3', {"###", "  #", "###", "  #", "###"}},
      {'4', {"# #", "# #", "###", "  #", "  #"}}, {'5', {"###", "#  ", "###", "  #", "###"}},
      {'6', {"###", "#  ", "###", "# #", "###"}}, {'7', {"###", "  #", "  #", "  #", "  #"}},
      {'8', {"###", "# #", "###", "# #", "###"}}, {'9', {"###", "# #", "###", "  #", "###"}},
      {'-', {"   ", "   ", "###", "   ", "   "}}, {'.', {"   ", "   ", "   ", "   ", " # "}},
      {'e', {"###", "#  ", "## ", "#  ", "###"}}, {'T', {"###", " # ", " # ", " # ", " # "}},
      {'+', {"   ", " # ", "###", " # ", "   "}}};
  return g;
}

inline void put_pixel(ImageBatch& img, int y, int x, const std::array<float, 3>& rgb) {
  if (y < 0 || y >= img.h() || x < 0 || x >= img.w()) return;
  for (int c = 0; c < 3; ++c) img(0, c, y, x) = rgb[c];
}

inline void draw_text(ImageBatch& img, int y, int x, const std::string& text,
                      const std::array<float, 3>& rgb) {
  for (char ch : text) {
    auto it = glyphs().find(ch);
    if (it != glyphs().end()) {
      for (int r = 0; r < 5; ++r)
        for (int c = 0; c < 3; ++c)
          if (it->second[r][c] == '#') put_pixel(img, y + r, x + c, rgb);
    }
    x += 4;
  }
}

inline void draw_line(ImageBatch& img, double y0, double x0, double y1, double x1,
                      const std::array<float, 3>& rgb) {
  const int steps = static_cast<int>(std::max(std::abs(y1 - y0), std::abs(x1 - x0))) + 1;
  for (int s = 0; s <= steps; ++s) {
    double t = static_cast<double>(s) / steps;
    put_pixel(img, static_cast<int>(std::lround(y0 + t * (y1 - y0))),
              static_cast<int>(std::lround(x0 + t * (x1 - x0))), rgb);
  }
}

inline std::string tick_label(double v) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

}  // namespace plotdetail

// Renders the per-scale weighted totals and the grand total from a history
// CSV as a PNG line plot.
inline void plot_history_csv(const std::filesystem::path& csv_path,
                             const std::filesystem::path& png_path) {
  std::ifstream f(csv_path);
  if (!f) throw DataError("cannot open history csv: " + csv_path.string());
  std::string line;
  if (!std::getline(f, line)) throw DataError("empty history csv");

  std::map<std::string, plotdetail::Series> series;
  const std::vector<std::array<float, 3>> palette = {
      {{0.85f, 0.2f, 0.2f}}, {{0.2f, 0.55f, 0.2f}}, {{0.2f, 0.3f, 0.85f}},
      {{0.75f, 0.5f, 0.1f}}, {{0.55f, 0.2f, 0.7f}}, {{0.1f, 0.6f, 0.6f}}};
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string iter_s, scale_s, cell;
    std::getline(ss, iter_s, ',');
    std::getline(ss, scale_s, ',');
    std::vector<std::string> rest;
    while (std::getline(ss, cell, ',')) rest.push_back(cell);
    if (rest.size() < 5) continue;
    std::string label = scale_s == "total" ? "T" : scale_s;
    auto [it, inserted] = series.try_emplace(label);
    if (inserted) {
      it->second.label = label;
      it->second.color = palette[(series.size() - 1) % palette.size()];
    }
    it->second.x.push_back(std::stod(iter_s));
    it->second.y.push_back(std::stod(rest.back()));
  }
  if (series.empty()) throw DataError("history csv has no data rows");

  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto& [_, s] : series) {
    for (double v : s.x) {
      xmin = std::min(xmin, v);
      xmax = std::max(xmax, v);
    }
    for (double v : s.y) {
      ymin = std::min(ymin, v);
      ymax = std::max(ymax, v);
    }
  }
  if (xmax <= xmin) xmax = xmin + 1;
  if (ymax <= ymin) ymax = ymin + 1;

  const int width = 900, height = 540, ml = 60, mr = 20, mt = 20, mb = 40;
  ImageBatch img(1, 3, height, width, 1.0f);  // white canvas
  const std::array<float, 3> axis{-0.6f, -0.6f, -0.6f};
  const std::array<float, 3> grid{0.82f, 0.82f, 0.82f};

  auto px = [&](double x) {
    return ml + (x - xmin) / (xmax - xmin) * (width - ml - mr);
  };
  auto py = [&](double y) {
    return height - mb - (y - ymin) / (ymax - ymin) * (height - mt - mb);
  };

  for (int t = 0; t <= 4; ++t) {
    double yv = ymin + (ymax - ymin) * t / 4.0;
    double xv = xmin + (xmax - xmin) * t / 4.0;
    plotdetail::draw_line(img, py(yv), ml, py(yv), width - mr, grid);
    plotdetail::draw_line(img, mt, px(xv), height - mb, px(xv), grid);
    plotdetail::draw_text(img, static_cast<int>(py(yv)) - 2, 4, plotdetail::tick_label(yv), axis);
    plotdetail::draw_text(img, height - mb + 6, static_cast<int>(px(xv)) - 6,
                          plotdetail::tick_label(xv), axis);
  }
  plotdetail::draw_line(img, mt, ml, height - mb, ml, axis);
  plotdetail::draw_line(img, height - mb, ml, height - mb, width - mr, axis);

  int legend_y = mt + 4;
  for (const auto& [_, s] : series) {
    for (std::size_t i = 1; i < s.x.size(); ++i)
      plotdetail::draw_line(img, py(s.y[i - 1]), px(s.x[i - 1]), py(s.y[i]), px(s.x[i]), s.color);
    for (int dy = 0; dy < 5; ++dy)
      for (int dx = 0; dx < 5; ++dx) plotdetail::put_pixel(img, legend_y + dy, width - mr - 40 + dx, s.color);
    plotdetail::draw_text(img, legend_y, width - mr - 32, s.label, axis);
    legend_y += 9;
  }
  save_image_png(png_path, img);
}

}  // namespace usaad
