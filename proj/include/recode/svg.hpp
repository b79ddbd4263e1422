#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace recode {

struct ScatterPoint {
  double x = 0.0;
  double y = 0.0;
  double weight = 1.0;  // glyph area scales with this
};

inline std::string svg_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

// Scatter of weighted points in the [0, domain]^2 square, y-axis flipped so
// the origin sits at the bottom-left.
inline void svg_scatter(const std::filesystem::path& path, const std::vector<ScatterPoint>& points,
                        double domain, const std::string& title) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("svg_scatter: cannot open " + path.string());
  const double size = 480.0;
  const double margin = 20.0;
  const double span = size - 2 * margin;
  double max_w = 1e-12;
  for (const auto& p : points) max_w = std::max(max_w, p.weight);
  out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << size << "' height='" << size
      << "'>\n";
  out << "<title>" << title << "</title>\n";
  out << "<rect x='" << margin << "' y='" << margin << "' width='" << span << "' height='" << span
      << "' fill='white' stroke='black'/>\n";
  for (const auto& p : points) {
    const double cx = margin + span * (p.x / domain);
    const double cy = size - margin - span * (p.y / domain);
    const double r = 1.0 + 5.0 * std::sqrt(std::max(p.weight, 0.0) / max_w);
    out << "<circle cx='" << svg_num(cx) << "' cy='" << svg_num(cy) << "' r='" << svg_num(r)
        << "' fill='steelblue' fill-opacity='0.6'/>\n";
  }
  out << "</svg>\n";
}

// Bar histogram with an optional vertical marker line (drawn in red).
inline void svg_histogram(const std::filesystem::path& path, const std::vector<double>& bin_edges,
                          const std::vector<double>& counts, double marker_x,
                          const std::string& title) {
  if (bin_edges.size() != counts.size() + 1) {
    throw std::invalid_argument("svg_histogram: need one more edge than bins");
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("svg_histogram: cannot open " + path.string());
  const double width = 640.0, height = 360.0, margin = 30.0;
  const double x_lo = bin_edges.front();
  const double x_hi = bin_edges.back();
  double y_hi = 1e-12;
  for (double c : counts) y_hi = std::max(y_hi, c);
  auto map_x = [&](double x) { return margin + (width - 2 * margin) * (x - x_lo) / (x_hi - x_lo); };
  auto map_h = [&](double c) { return (height - 2 * margin) * (c / y_hi); };
  out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << width << "' height='" << height
      << "'>\n";
  out << "<title>" << title << "</title>\n";
  for (std::size_t i = 0; i < counts.size(); ++i) {
    const double x0 = map_x(bin_edges[i]);
    const double x1 = map_x(bin_edges[i + 1]);
    const double h = map_h(counts[i]);
    out << "<rect x='" << svg_num(x0) << "' y='" << svg_num(height - margin - h) << "' width='"
        << svg_num(std::max(x1 - x0 - 1.0, 0.5)) << "' height='" << svg_num(h)
        << "' fill='steelblue'/>\n";
  }
  if (marker_x >= x_lo && marker_x <= x_hi) {
    const double mx = map_x(marker_x);
    out << "<line x1='" << svg_num(mx) << "' y1='" << svg_num(margin) << "' x2='" << svg_num(mx)
        << "' y2='" << svg_num(height - margin) << "' stroke='red' stroke-width='2'/>\n";
  }
  out << "</svg>\n";
}

// Maze grid with walls shaded and per-cell weights drawn as circles.
inline void svg_maze_overlay(const std::filesystem::path& path, const std::string& ascii_layout,
                             const std::vector<double>& cell_weights, std::size_t grid_size,
                             const std::string& title) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("svg_maze_overlay: cannot open " + path.string());
  const double cell = 24.0;
  const double size = cell * static_cast<double>(grid_size);
  double max_w = 1e-12;
  for (double w : cell_weights) max_w = std::max(max_w, w);
  out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << size << "' height='" << size
      << "'>\n";
  out << "<title>" << title << "</title>\n";
  std::size_t r = 0, c = 0;
  for (char ch : ascii_layout) {
    if (ch == '\n') {
      ++r;
      c = 0;
      continue;
    }
    const double x = static_cast<double>(c) * cell;
    const double y = static_cast<double>(r) * cell;
    const char* fill = ch == '#' ? "dimgray" : (ch == 'G' ? "gold" : (ch == 'S' ? "palegreen" : "white"));
    out << "<rect x='" << svg_num(x) << "' y='" << svg_num(y) << "' width='" << cell
        << "' height='" << cell << "' fill='" << fill << "' stroke='lightgray'/>\n";
    const std::size_t idx = r * grid_size + c;
    if (idx < cell_weights.size() && cell_weights[idx] > 0.0) {
      const double radius = 2.0 + (cell / 2.0 - 3.0) * std::sqrt(cell_weights[idx] / max_w);
      out << "<circle cx='" << svg_num(x + cell / 2) << "' cy='" << svg_num(y + cell / 2)
          << "' r='" << svg_num(radius) << "' fill='crimson' fill-opacity='0.7'/>\n";
    }
    ++c;
  }
  out << "</svg>\n";
}

}  // namespace recode
