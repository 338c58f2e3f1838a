// Copyright 2026 The LatentFormer Authors
// SPDX-License-Identifier: Apache-2.0

#include "latentformer/render.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

namespace latentformer {

namespace {

constexpr double kPixelsPerMeter = 12.0;
constexpr double kMargin = 20.0;
constexpr double kLegendHeight = 70.0;
constexpr double kAgentLength = 4.5;
constexpr double kAgentWidth = 2.0;

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

struct Canvas {
  Vec2 origin;
  double sx(double x) const { return kMargin + (x - origin.x) * kPixelsPerMeter; }
  double sy(double y) const { return kMargin + (origin.y - y) * kPixelsPerMeter; }
  std::string pt(const Vec2& p) const { return num(sx(p.x)) + "," + num(sy(p.y)); }
};

void polyline(std::ostringstream& out, const Canvas& c, const Track& pts, const std::string& color,
              double width, const char* extra = "") {
  out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"" << num(width) << "\""
      << extra << " points=\"";
  for (std::size_t i = 0; i < pts.size(); ++i) out << (i ? " " : "") << c.pt(pts[i]);
  out << "\"/>\n";
}

}  // namespace

std::string ramp_color(std::size_t t, std::size_t steps) {
  const double f = steps <= 1 ? 0.0 : static_cast<double>(t) / static_cast<double>(steps - 1);
  const int r = static_cast<int>(std::lround(255.0 * f));
  const int b = static_cast<int>(std::lround(255.0 * (1.0 - f)));
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x00%02x", r, b);
  return buf;
}

std::string render_svg(const Scene& scene, const std::vector<TrajectorySample>* predictions) {
  const DrivableMask& m = scene.mask;
  const Canvas c{m.origin};
  const double map_w = static_cast<double>(m.width) * m.resolution * kPixelsPerMeter;
  const double map_h = static_cast<double>(m.height) * m.resolution * kPixelsPerMeter;
  const double width = map_w + 2 * kMargin;
  const double height = map_h + 2 * kMargin + kLegendHeight;
  std::ostringstream out;
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(width) << "\" height=\""
      << num(height) << "\" viewBox=\"0 0 " << num(width) << " " << num(height) << "\">\n"
      << "<title>" << scene.id << "</title>\n"
      << "<rect x=\"0\" y=\"0\" width=\"" << num(width) << "\" height=\"" << num(height)
      << "\" fill=\"#ffffff\"/>\n"
      << "<rect x=\"" << num(kMargin) << "\" y=\"" << num(kMargin) << "\" width=\"" << num(map_w)
      << "\" height=\"" << num(map_h) << "\" fill=\"#f4f4f0\" stroke=\"#999999\"/>\n";

  // Drivable area: one rect per horizontal run of drivable pixels.
  const double cell = m.resolution * kPixelsPerMeter;
  out << "<g fill=\"#c8c8c8\">\n";
  for (std::size_t r = 0; r < m.height; ++r) {
    std::size_t col = 0;
    while (col < m.width) {
      if (!m.at(r, col)) {
        ++col;
        continue;
      }
      std::size_t end = col;
      while (end < m.width && m.at(r, end)) ++end;
      out << "<rect x=\"" << num(kMargin + static_cast<double>(col) * cell) << "\" y=\""
          << num(kMargin + static_cast<double>(r) * cell) << "\" width=\""
          << num(static_cast<double>(end - col) * cell) << "\" height=\"" << num(cell) << "\"/>\n";
      col = end;
    }
  }
  out << "</g>\n";

  // Predictions under the ground truth so the red reference stays visible.
  if (predictions != nullptr) {
    out << "<g stroke-linecap=\"round\" opacity=\"0.85\">\n";
    for (const auto& sample : *predictions) {
      for (std::size_t a = 0; a < sample.points.size() && a < scene.agents.size(); ++a) {
        const Track& pts = sample.points[a];
        Vec2 prev = scene.agents[a].past.back();
        for (std::size_t t = 0; t < pts.size(); ++t) {
          out << "<line x1=\"" << num(c.sx(prev.x)) << "\" y1=\"" << num(c.sy(prev.y)) << "\" x2=\""
              << num(c.sx(pts[t].x)) << "\" y2=\"" << num(c.sy(pts[t].y)) << "\" stroke=\""
              << ramp_color(t, pts.size()) << "\" stroke-width=\"1.50\"/>\n";
          prev = pts[t];
        }
      }
    }
    out << "</g>\n";
  }

  for (const auto& agent : scene.agents) {
    polyline(out, c, agent.past, "#555555", 1.5, " stroke-dasharray=\"3,2\"");
    Track gt{agent.past.back()};
    gt.insert(gt.end(), agent.future.begin(), agent.future.end());
    polyline(out, c, gt, "#e00000", 2.0);

    const Vec2& now = agent.past.back();
    const Vec2& before = agent.past[agent.past.size() - 2];
    const double heading = std::atan2(now.y - before.y, now.x - before.x);
    const double deg = -heading * 180.0 / 3.14159265358979323846;
    const double l = kAgentLength * kPixelsPerMeter, w = kAgentWidth * kPixelsPerMeter;
    out << "<g transform=\"translate(" << c.pt(now) << ") rotate(" << num(deg) << ")\">\n"
        << "<rect x=\"" << num(-l / 2) << "\" y=\"" << num(-w / 2) << "\" width=\"" << num(l)
        << "\" height=\"" << num(w) << "\" fill=\"#3060c0\" stroke=\"#102040\"/>\n"
        << "<polygon points=\"" << num(l / 2) << ",0 " << num(l / 2 - w * 0.8) << ","
        << num(-w * 0.4) << " " << num(l / 2 - w * 0.8) << "," << num(w * 0.4)
        << "\" fill=\"#ffd000\"/>\n"
        << "</g>\n"
        << "<text x=\"" << num(c.sx(now.x) + 6) << "\" y=\"" << num(c.sy(now.y) - 6)
        << "\" font-family=\"sans-serif\" font-size=\"10\">" << agent.id << "</text>\n";
  }

  // Legend and scale bar.
  const double ly = kMargin + map_h + 20;
  out << "<g font-family=\"sans-serif\" font-size=\"11\">\n"
      << "<line x1=\"" << num(kMargin) << "\" y1=\"" << num(ly) << "\" x2=\"" << num(kMargin + 30)
      << "\" y2=\"" << num(ly) << "\" stroke=\"#e00000\" stroke-width=\"2.00\"/>\n"
      << "<text x=\"" << num(kMargin + 36) << "\" y=\"" << num(ly + 4) << "\">ground truth</text>\n"
      << "<line x1=\"" << num(kMargin + 130) << "\" y1=\"" << num(ly) << "\" x2=\""
      << num(kMargin + 145) << "\" y2=\"" << num(ly) << "\" stroke=\"" << ramp_color(0, 2)
      << "\" stroke-width=\"2.00\"/>\n"
      << "<line x1=\"" << num(kMargin + 145) << "\" y1=\"" << num(ly) << "\" x2=\""
      << num(kMargin + 160) << "\" y2=\"" << num(ly) << "\" stroke=\"" << ramp_color(1, 2)
      << "\" stroke-width=\"2.00\"/>\n"
      << "<text x=\"" << num(kMargin + 166) << "\" y=\"" << num(ly + 4)
      << "\">prediction (early to late)</text>\n"
      << "<line x1=\"" << num(kMargin + 330) << "\" y1=\"" << num(ly) << "\" x2=\""
      << num(kMargin + 360) << "\" y2=\"" << num(ly) << "\" stroke=\"#555555\" stroke-width=\"1.50\""
      << " stroke-dasharray=\"3,2\"/>\n"
      << "<text x=\"" << num(kMargin + 366) << "\" y=\"" << num(ly + 4) << "\">observed</text>\n";
  const double bar = 10.0 * kPixelsPerMeter;
  const double by = ly + 28;
  out << "<line x1=\"" << num(kMargin) << "\" y1=\"" << num(by) << "\" x2=\"" << num(kMargin + bar)
      << "\" y2=\"" << num(by) << "\" stroke=\"#000000\" stroke-width=\"2.00\"/>\n"
      << "<line x1=\"" << num(kMargin) << "\" y1=\"" << num(by - 4) << "\" x2=\"" << num(kMargin)
      << "\" y2=\"" << num(by + 4) << "\" stroke=\"#000000\"/>\n"
      << "<line x1=\"" << num(kMargin + bar) << "\" y1=\"" << num(by - 4) << "\" x2=\""
      << num(kMargin + bar) << "\" y2=\"" << num(by + 4) << "\" stroke=\"#000000\"/>\n"
      << "<text x=\"" << num(kMargin + bar + 8) << "\" y=\"" << num(by + 4) << "\">10 m</text>\n"
      << "</g>\n"
      << "</svg>\n";
  return out.str();
}

}  // namespace latentformer
