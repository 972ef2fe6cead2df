#pragma once

// Plain-text SVG output: robot frames and fitness curves. Numbers are printed
// with fixed precision so identical inputs give identical files.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "vsr/sim.hpp"

namespace vsr::svg {

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  std::string s(buf);
  if (s == "-0.00") s = "0.00";
  return s;
}

inline const char* voxel_color(VoxelType t) {
  switch (t) {
    case VoxelType::Rigid: return "#3a3a3a";
    case VoxelType::Soft: return "#b8b8b8";
    case VoxelType::HorizontalActuator: return "#e07b39";
    case VoxelType::VerticalActuator: return "#3a7be0";
    case VoxelType::Empty: break;
  }
  return "none";
}

/// One frame. The view is a fixed-size window centred on the robot's centre
/// of mass horizontally, with the ground line at the bottom.
inline std::string render_state(const SimState& st, int step = -1, double px_per_m = 400.0) {
  const double width_m = 1.6, height_m = 0.9, ground_px = 40.0;
  const double w = width_m * px_per_m, h = height_m * px_per_m;
  const Vec2 com = center_of_mass(st.body.masses);
  const double x0 = com.x() - width_m / 2.0;
  auto px = [&](const Vec2& p) { return std::array<double, 2>{(p.x() - x0) * px_per_m, h - ground_px - p.y() * px_per_m}; };

  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(w) << "\" height=\"" << num(h) << "\" viewBox=\"0 0 "
      << num(w) << ' ' << num(h) << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n";
  out << "<line x1=\"0\" y1=\"" << num(h - ground_px) << "\" x2=\"" << num(w) << "\" y2=\"" << num(h - ground_px)
      << "\" stroke=\"#444\" stroke-width=\"2\"/>\n";
  // Ground ticks every 0.1 m so motion is visible between frames.
  for (double t = std::floor(x0 * 10.0) / 10.0; t <= x0 + width_m; t += 0.1) {
    const double x = (t - x0) * px_per_m;
    out << "<line x1=\"" << num(x) << "\" y1=\"" << num(h - ground_px) << "\" x2=\"" << num(x) << "\" y2=\""
        << num(h - ground_px + 6) << "\" stroke=\"#888\"/>\n";
  }
  auto polygon = [&](const std::vector<Vec2>& pts, const char* fill) {
    out << "<polygon points=\"";
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const auto p = px(pts[i]);
      out << (i ? " " : "") << num(p[0]) << ',' << num(p[1]);
    }
    out << "\" fill=\"" << fill << "\" stroke=\"#111\" stroke-width=\"1\"/>\n";
  };
  for (const auto& v : st.body.voxels) {
    std::vector<Vec2> pts;
    for (int id : v.vertices) pts.push_back(st.body.masses[static_cast<std::size_t>(id)].position);
    polygon(pts, voxel_color(v.type));
  }
  if (st.box) {
    std::vector<Vec2> pts;
    for (const auto& m : st.box->masses) pts.push_back(m.position);
    polygon(pts, "#8b5a2b");
  }
  if (step >= 0) out << "<text x=\"10\" y=\"20\" font-family=\"monospace\" font-size=\"14\">step " << step << "</text>\n";
  out << "</svg>\n";
  return out.str();
}

struct Series {
  std::string label;
  std::vector<double> mean;
  std::vector<double> std;
};

/// Line plot of mean curves with shaded +-1 std bands.
inline std::string plot_curves(const std::vector<Series>& series, const std::string& title, const std::string& xlabel,
                               const std::string& ylabel) {
  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
  const double W = 720, H = 440, L = 70, R = 200, T = 40, B = 50;
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  std::size_t n = 0;
  for (const auto& s : series) {
    n = std::max(n, s.mean.size());
    for (std::size_t i = 0; i < s.mean.size(); ++i) {
      lo = std::min(lo, s.mean[i] - s.std[i]);
      hi = std::max(hi, s.mean[i] + s.std[i]);
    }
  }
  if (!std::isfinite(lo)) lo = 0.0, hi = 1.0;
  if (hi - lo < 1e-9) lo -= 0.5, hi += 0.5;
  const double pad = 0.05 * (hi - lo);
  lo -= pad;
  hi += pad;
  const double xmax = n > 1 ? static_cast<double>(n - 1) : 1.0;
  auto X = [&](double i) { return L + (W - L - R) * i / xmax; };
  auto Y = [&](double v) { return T + (H - T - B) * (hi - v) / (hi - lo); };

  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(W) << "\" height=\"" << num(H) << "\" viewBox=\"0 0 "
      << num(W) << ' ' << num(H) << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n";
  out << "<text x=\"" << num(W / 2 - 60) << "\" y=\"22\" font-size=\"15\">" << title << "</text>\n";
  out << "<line x1=\"" << num(L) << "\" y1=\"" << num(H - B) << "\" x2=\"" << num(W - R) << "\" y2=\"" << num(H - B)
      << "\" stroke=\"#000\"/>\n";
  out << "<line x1=\"" << num(L) << "\" y1=\"" << num(T) << "\" x2=\"" << num(L) << "\" y2=\"" << num(H - B)
      << "\" stroke=\"#000\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double v = lo + (hi - lo) * k / 4.0;
    out << "<text x=\"" << num(L - 6) << "\" y=\"" << num(Y(v) + 4) << "\" text-anchor=\"end\">" << num(v) << "</text>\n";
  }
  for (std::size_t i = 0; i < n; ++i)
    out << "<text x=\"" << num(X(static_cast<double>(i))) << "\" y=\"" << num(H - B + 16) << "\" text-anchor=\"middle\">" << i
        << "</text>\n";
  out << "<text x=\"" << num((L + W - R) / 2) << "\" y=\"" << num(H - 12) << "\" text-anchor=\"middle\">" << xlabel
      << "</text>\n";
  out << "<text x=\"16\" y=\"" << num((T + H - B) / 2) << "\" transform=\"rotate(-90 16 " << num((T + H - B) / 2)
      << ")\" text-anchor=\"middle\">" << ylabel << "</text>\n";

  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* c = kColors[k % 6];
    if (s.mean.empty()) continue;
    out << "<polygon fill=\"" << c << "\" fill-opacity=\"0.18\" stroke=\"none\" points=\"";
    for (std::size_t i = 0; i < s.mean.size(); ++i)
      out << (i ? " " : "") << num(X(static_cast<double>(i))) << ',' << num(Y(s.mean[i] + s.std[i]));
    for (std::size_t i = s.mean.size(); i-- > 0;)
      out << ' ' << num(X(static_cast<double>(i))) << ',' << num(Y(s.mean[i] - s.std[i]));
    out << "\"/>\n";
    out << "<polyline fill=\"none\" stroke=\"" << c << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < s.mean.size(); ++i)
      out << (i ? " " : "") << num(X(static_cast<double>(i))) << ',' << num(Y(s.mean[i]));
    out << "\"/>\n";
    const double ly = T + 10 + 20.0 * static_cast<double>(k);
    out << "<line x1=\"" << num(W - R + 15) << "\" y1=\"" << num(ly) << "\" x2=\"" << num(W - R + 35) << "\" y2=\""
        << num(ly) << "\" stroke=\"" << c << "\" stroke-width=\"3\"/>\n";
    out << "<text x=\"" << num(W - R + 40) << "\" y=\"" << num(ly + 4) << "\">" << s.label << "</text>\n";
  }
  out << "</svg>\n";
  return out.str();
}

}  // namespace vsr::svg
