#pragma once

#include <algorithm>
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pvmpi/data_io.hpp"
#include "pvmpi/marginals.hpp"
#include "pvmpi/mpi.hpp"
#include "pvmpi/scenarios.hpp"

namespace pvmpi::plot {

// Minimal SVG canvas with a data rectangle [x0,x1] x [y0,y1].
class Canvas
{
public:
  Canvas(double x0, double x1, double y0, double y1, int width = 640, int height = 420)
    : x0_(x0), x1_(x1), y0_(y0), y1_(y1), w_(width), h_(height)
  {
  }

  double px(double x) const { return left + (x - x0_) / (x1_ - x0_) * (w_ - left - right); }
  double py(double y) const { return h_ - bottom - (y - y0_) / (y1_ - y0_) * (h_ - top - bottom); }

  void polygon(const std::vector<std::pair<double, double>>& pts, const std::string& fill,
               const std::string& cls)
  {
    body_ << "<polygon class=\"" << cls << "\" fill=\"" << fill << "\" stroke=\"none\" points=\"";
    for (const auto& [x, y] : pts)
      body_ << num(px(x)) << ',' << num(py(y)) << ' ';
    body_ << "\"/>\n";
  }

  void polyline(const std::vector<std::pair<double, double>>& pts, const std::string& stroke,
                double width, const std::string& cls, double opacity = 1.0)
  {
    body_ << "<polyline class=\"" << cls << "\" fill=\"none\" stroke=\"" << stroke
          << "\" stroke-width=\"" << num(width) << "\"";
    if (opacity < 1.0)
      body_ << " stroke-opacity=\"" << num(opacity) << "\"";
    body_ << " points=\"";
    for (const auto& [x, y] : pts)
      body_ << num(px(x)) << ',' << num(py(y)) << ' ';
    body_ << "\"/>\n";
  }

  void rect(double xa, double ya, double xb, double yb, const std::string& fill,
            const std::string& cls)
  {
    body_ << "<rect class=\"" << cls << "\" x=\"" << num(px(xa)) << "\" y=\"" << num(py(yb))
          << "\" width=\"" << num(px(xb) - px(xa)) << "\" height=\"" << num(py(ya) - py(yb))
          << "\" fill=\"" << fill << "\" stroke=\"#08306b\" stroke-width=\"0.3\"/>\n";
  }

  void circle(double x, double y, double r, const std::string& fill, const std::string& cls,
              double opacity = 1.0)
  {
    body_ << "<circle class=\"" << cls << "\" cx=\"" << num(px(x)) << "\" cy=\"" << num(py(y))
          << "\" r=\"" << num(r) << "\" fill=\"" << fill << "\"";
    if (opacity < 1.0)
      body_ << " fill-opacity=\"" << num(opacity) << "\"";
    body_ << "/>\n";
  }

  void text(double x, double y, const std::string& s, const std::string& anchor = "middle",
            int size = 12, const std::string& fill = "#000")
  {
    body_ << "<text x=\"" << num(x) << "\" y=\"" << num(y) << "\" font-size=\"" << size
          << "\" text-anchor=\"" << anchor << "\" fill=\"" << fill << "\">" << s
          << "</text>\n";
  }

  void axes(const std::string& title, const std::string& xlabel, const std::string& ylabel,
            const std::vector<double>& xticks, const std::vector<double>& yticks)
  {
    const double bx = px(x0_), by = py(y0_), tx = px(x1_), ty = py(y1_);
    body_ << "<g class=\"axes\" stroke=\"#000\" stroke-width=\"1\">\n"
          << "<line x1=\"" << num(bx) << "\" y1=\"" << num(by) << "\" x2=\"" << num(tx)
          << "\" y2=\"" << num(by) << "\"/>\n"
          << "<line x1=\"" << num(bx) << "\" y1=\"" << num(by) << "\" x2=\"" << num(bx)
          << "\" y2=\"" << num(ty) << "\"/>\n</g>\n";
    for (double t : xticks)
      text(px(t), by + 16, label(t));
    for (double t : yticks)
      text(bx - 6, py(t) + 4, label(t), "end");
    text((bx + tx) / 2, 20, title, "middle", 14);
    text((bx + tx) / 2, h_ - 8, xlabel);
    body_ << "<text x=\"14\" y=\"" << num((by + ty) / 2) << "\" font-size=\"12\" "
          << "text-anchor=\"middle\" transform=\"rotate(-90 14 " << num((by + ty) / 2)
          << ")\">" << ylabel << "</text>\n";
  }

  std::string str() const
  {
    std::ostringstream s;
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w_ << "\" height=\"" << h_
      << "\" viewBox=\"0 0 " << w_ << ' ' << h_ << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"#fff\"/>\n"
      << body_.str() << "</svg>\n";
    return s.str();
  }

  static std::string num(double v)
  {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
  }

  static std::string label(double v)
  {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
  }

  static constexpr double left = 56, right = 20, top = 34, bottom = 44;

private:
  double x0_, x1_, y0_, y1_;
  int w_, h_;
  std::ostringstream body_;
};

// Blues, k = 0 lightest .. n-1 darkest.
inline std::string shade(std::size_t k, std::size_t n)
{
  const double t = n > 1 ? static_cast<double>(k) / static_cast<double>(n - 1) : 1.0;
  auto mix = [&](int a, int b) { return static_cast<int>(a + (b - a) * t + 0.5); };
  char buf[16];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", mix(222, 8), mix(235, 48), mix(247, 107));
  return buf;
}

inline std::vector<double> unit_ticks() { return { 0.0, 0.25, 0.5, 0.75, 1.0 }; }

inline std::vector<double> hour_ticks(int hour_start, int d)
{
  std::vector<double> t;
  for (int h = 0; h < d; ++h)
    t.push_back(hour_start + h);
  return t;
}

inline std::vector<std::pair<double, double>> trajectory(std::span<const double> p,
                                                         int hour_start)
{
  std::vector<std::pair<double, double>> pts;
  for (std::size_t h = 0; h < p.size(); ++h)
    pts.emplace_back(hour_start + static_cast<double>(h), p[h]);
  return pts;
}

// Central univariate intervals of one day: band m spans levels m and M-1-m.
inline std::string fan_chart(const std::vector<QuantileCurve>& curves,
                             std::span<const double> obs, int hour_start,
                             const std::string& title)
{
  const int d = static_cast<int>(curves.size());
  Canvas c(hour_start, hour_start + std::max(d - 1, 1), 0.0, 1.0);
  const std::size_t m = curves.empty() ? 0 : curves.front().levels().size();
  const std::size_t nb = m / 2;
  for (std::size_t k = 0; k < nb; ++k) {
    std::vector<std::pair<double, double>> pts;
    for (int h = 0; h < d; ++h)
      pts.emplace_back(hour_start + h, curves[h].values()[m - 1 - k]);
    for (int h = d - 1; h >= 0; --h)
      pts.emplace_back(hour_start + h, curves[h].values()[k]);
    c.polygon(pts, shade(k, nb), "band");
  }
  if (m % 2 == 1) {
    std::vector<double> med;
    for (const auto& cv : curves)
      med.push_back(cv.values()[m / 2]);
    c.polyline(trajectory(med, hour_start), "#08306b", 1.2, "median");
  }
  if (!obs.empty())
    c.polyline(trajectory(obs, hour_start), "#d7301f", 2.0, "observed");
  c.axes(title, "hour", "normalized power", hour_ticks(hour_start, d), unit_ticks());
  return c.str();
}

inline std::string spaghetti(const ScenarioSet& set, std::span<const double> obs,
                             int hour_start, const std::string& title,
                             Eigen::Index max_lines = 100)
{
  const int d = static_cast<int>(set.dim());
  Canvas c(hour_start, hour_start + std::max(d - 1, 1), 0.0, 1.0);
  const auto n = std::min(max_lines, set.size());
  for (Eigen::Index s = 0; s < n; ++s) {
    std::vector<double> row(d);
    for (int h = 0; h < d; ++h)
      row[h] = set.values(s, h);
    c.polyline(trajectory(row, hour_start), "#6baed6", 0.7, "scenario", 0.6);
  }
  if (!obs.empty())
    c.polyline(trajectory(obs, hour_start), "#d7301f", 2.0, "observed");
  c.axes(title, "hour", "normalized power", hour_ticks(hour_start, d), unit_ticks());
  return c.str();
}

// Nested MPI regions, widest (lightest) drawn first.
inline std::string mpi_bands(const MPISet& set, std::span<const double> obs, int hour_start,
                             const std::string& title)
{
  const int d = set.boxes.empty() ? 0 : static_cast<int>(set.boxes.front().dim());
  Canvas c(hour_start, hour_start + std::max(d - 1, 1), 0.0, 1.0);
  const std::size_t n = set.boxes.size();
  for (std::size_t i = n; i-- > 0;) {
    const auto& b = set.boxes[i];
    std::vector<std::pair<double, double>> pts;
    for (int h = 0; h < d; ++h)
      pts.emplace_back(hour_start + h, b.upper[h]);
    for (int h = d - 1; h >= 0; --h)
      pts.emplace_back(hour_start + h, b.lower[h]);
    c.polygon(pts, shade(n - 1 - i, n), "band");
  }
  if (!obs.empty())
    c.polyline(trajectory(obs, hour_start), "#d7301f", 2.0, "observed");
  c.axes(title, "hour", "normalized power", hour_ticks(hour_start, d), unit_ticks());
  return c.str();
}

// Projection of the nested boxes onto two lead-times, with scenarios and the
// observation.
inline std::string bivariate_boxes(const MPISet& set, const ScenarioSet* scen,
                                   std::span<const double> obs, int i, int j,
                                   int hour_start, const std::string& title)
{
  Canvas c(0.0, 1.0, 0.0, 1.0, 480, 480);
  const std::size_t n = set.boxes.size();
  for (std::size_t k = n; k-- > 0;) {
    const auto& b = set.boxes[k];
    c.rect(b.lower[i], b.lower[j], b.upper[i], b.upper[j], shade(n - 1 - k, n), "band");
  }
  if (scen)
    for (Eigen::Index s = 0; s < scen->size(); ++s)
      c.circle(scen->values(s, i), scen->values(s, j), 1.2, "#525252", "scenario", 0.5);
  if (!obs.empty())
    c.circle(obs[i], obs[j], 4.0, "#e41a1c", "observed");
  c.axes(title, "hour " + std::to_string(hour_start + i),
         "hour " + std::to_string(hour_start + j), unit_ticks(), unit_ticks());
  return c.str();
}

struct ReliabilityCurve
{
  std::string model;
  std::vector<double> alphas;
  std::vector<double> empirical;
};

inline std::string reliability(const std::vector<ReliabilityCurve>& curves,
                               const std::string& title)
{
  static const char* colors[] = { "#1f78b4", "#e31a1c", "#33a02c", "#ff7f00" };
  Canvas c(0.0, 1.0, 0.0, 1.0, 480, 480);
  c.polyline({ { 0.0, 0.0 }, { 1.0, 1.0 } }, "#969696", 1.0, "diagonal");
  for (std::size_t k = 0; k < curves.size(); ++k) {
    std::vector<std::pair<double, double>> pts;
    for (std::size_t a = 0; a < curves[k].alphas.size(); ++a)
      pts.emplace_back(curves[k].alphas[a], curves[k].empirical[a]);
    const std::string col = colors[k % 4];
    c.polyline(pts, col, 1.8, "reliability");
    for (const auto& [x, y] : pts)
      c.circle(x, y, 2.5, col, "point");
    c.text(c.px(0.05), c.py(0.95) + 16.0 * static_cast<double>(k), curves[k].model, "start", 12,
           col);
  }
  c.axes(title, "nominal coverage", "empirical coverage", unit_ticks(), unit_ticks());
  return c.str();
}

} // namespace pvmpi::plot
