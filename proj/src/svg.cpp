#include "fatlens/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

namespace fatlens {

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
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

// Roughly five round tick values spanning [lo, hi].
std::vector<double> nice_ticks(double lo, double hi) {
  const double span = hi - lo;
  const double raw = span / 5.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 5.0, 10.0})
    if (raw <= m * mag) {
      step = m * mag;
      break;
    }
  std::vector<double> t;
  for (double v = std::ceil(lo / step) * step; v <= hi + 1e-9 * span; v += step)
    t.push_back(std::fabs(v) < 1e-12 * step ? 0.0 : v);
  return t;
}

}  // namespace

void SvgPlot::add_line(std::vector<std::pair<double, double>> pts, std::string color,
                       std::string legend) {
  series_.push_back({std::move(pts), {}, std::move(color), std::move(legend), true});
}

void SvgPlot::add_scatter(std::vector<std::pair<double, double>> pts, std::string color,
                          std::string legend, std::vector<double> error) {
  series_.push_back({std::move(pts), std::move(error), std::move(color), std::move(legend), false});
}

std::string SvgPlot::str() const {
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  double ymin = xmin, ymax = -xmin;
  for (const auto& s : series_)
    for (std::size_t i = 0; i < s.pts.size(); ++i) {
      const auto [x, y] = s.pts[i];
      if (!std::isfinite(x) || !std::isfinite(y)) continue;
      const double e = i < s.err.size() && std::isfinite(s.err[i]) ? s.err[i] : 0.0;
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
      ymin = std::min(ymin, y - e);
      ymax = std::max(ymax, y + e);
    }
  if (!std::isfinite(xmin)) xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  if (xmax == xmin) xmin -= 0.5, xmax += 0.5;
  if (ymax == ymin) ymin -= 0.5, ymax += 0.5;
  const double pad = 0.05 * (ymax - ymin);
  ymin -= pad;
  ymax += pad;

  const double left = 64, right = 16, top = 36, bottom = 52;
  const double pw = width_ - left - right, ph = height_ - top - bottom;
  auto sx = [&](double x) { return left + (x - xmin) / (xmax - xmin) * pw; };
  auto sy = [&](double y) { return top + (ymax - y) / (ymax - ymin) * ph; };

  std::string o;
  o += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(width_) + "\" height=\"" +
       num(height_) + "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  o += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  if (!title_.empty())
    o += "<text x=\"" + num(width_ / 2) + "\" y=\"20\" text-anchor=\"middle\" font-size=\"13\">" +
         escape(title_) + "</text>\n";
  o += "<line x1=\"" + num(left) + "\" y1=\"" + num(top + ph) + "\" x2=\"" + num(left + pw) +
       "\" y2=\"" + num(top + ph) + "\" stroke=\"black\"/>\n";
  o += "<line x1=\"" + num(left) + "\" y1=\"" + num(top) + "\" x2=\"" + num(left) + "\" y2=\"" +
       num(top + ph) + "\" stroke=\"black\"/>\n";

  std::vector<std::pair<double, std::string>> xt = xticks_;
  if (xt.empty())
    for (double v : nice_ticks(xmin, xmax)) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%g", v);
      xt.emplace_back(v, buf);
    }
  for (const auto& [v, label] : xt) {
    if (v < xmin || v > xmax) continue;
    o += "<line x1=\"" + num(sx(v)) + "\" y1=\"" + num(top + ph) + "\" x2=\"" + num(sx(v)) +
         "\" y2=\"" + num(top + ph + 4) + "\" stroke=\"black\"/>\n";
    o += "<text x=\"" + num(sx(v)) + "\" y=\"" + num(top + ph + 16) +
         "\" text-anchor=\"middle\">" + escape(label) + "</text>\n";
  }
  for (double v : nice_ticks(ymin, ymax)) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", v);
    o += "<line x1=\"" + num(left - 4) + "\" y1=\"" + num(sy(v)) + "\" x2=\"" + num(left) +
         "\" y2=\"" + num(sy(v)) + "\" stroke=\"black\"/>\n";
    o += "<text x=\"" + num(left - 6) + "\" y=\"" + num(sy(v) + 4) + "\" text-anchor=\"end\">" +
         buf + "</text>\n";
  }
  if (!xlabel_.empty())
    o += "<text x=\"" + num(left + pw / 2) + "\" y=\"" + num(height_ - 12) +
         "\" text-anchor=\"middle\">" + escape(xlabel_) + "</text>\n";
  if (!ylabel_.empty())
    o += "<text x=\"14\" y=\"" + num(top + ph / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 14 " +
         num(top + ph / 2) + ")\">" + escape(ylabel_) + "</text>\n";

  double legend_y = top + 8;
  for (const auto& s : series_) {
    if (s.line) {
      std::string pts;
      for (const auto& [x, y] : s.pts)
        if (std::isfinite(x) && std::isfinite(y)) pts += num(sx(x)) + "," + num(sy(y)) + " ";
      o += "<polyline fill=\"none\" stroke=\"" + s.color + "\" stroke-width=\"1.5\" points=\"" + pts +
           "\"/>\n";
    } else {
      for (std::size_t i = 0; i < s.pts.size(); ++i) {
        const auto [x, y] = s.pts[i];
        if (!std::isfinite(x) || !std::isfinite(y)) continue;
        if (i < s.err.size() && std::isfinite(s.err[i]))
          o += "<line x1=\"" + num(sx(x)) + "\" y1=\"" + num(sy(y - s.err[i])) + "\" x2=\"" +
               num(sx(x)) + "\" y2=\"" + num(sy(y + s.err[i])) + "\" stroke=\"" + s.color + "\"/>\n";
        o += "<circle cx=\"" + num(sx(x)) + "\" cy=\"" + num(sy(y)) + "\" r=\"3\" fill=\"" +
             s.color + "\"/>\n";
      }
    }
    if (!s.legend.empty()) {
      o += "<rect x=\"" + num(left + pw - 150) + "\" y=\"" + num(legend_y - 8) +
           "\" width=\"10\" height=\"10\" fill=\"" + s.color + "\"/>\n";
      o += "<text x=\"" + num(left + pw - 135) + "\" y=\"" + num(legend_y + 1) + "\">" +
           escape(s.legend) + "</text>\n";
      legend_y += 16;
    }
  }
  o += "</svg>\n";
  return o;
}

}  // namespace fatlens
