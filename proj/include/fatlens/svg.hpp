#pragma once

#include <string>
#include <utility>
#include <vector>

namespace fatlens {

// Small static SVG chart: axes with ticks, polylines, scatter markers, and
// optional vertical error bars.
class SvgPlot {
 public:
  SvgPlot(double width = 640, double height = 420) : width_(width), height_(height) {}

  void set_title(std::string t) { title_ = std::move(t); }
  void set_labels(std::string x, std::string y) {
    xlabel_ = std::move(x);
    ylabel_ = std::move(y);
  }
  void add_line(std::vector<std::pair<double, double>> pts, std::string color,
                std::string legend = {});
  void add_scatter(std::vector<std::pair<double, double>> pts, std::string color,
                   std::string legend = {}, std::vector<double> error = {});
  void set_x_ticks(std::vector<std::pair<double, std::string>> ticks) { xticks_ = std::move(ticks); }

  std::string str() const;

 private:
  struct Series {
    std::vector<std::pair<double, double>> pts;
    std::vector<double> err;
    std::string color;
    std::string legend;
    bool line = false;
  };
  double width_, height_;
  std::string title_, xlabel_, ylabel_;
  std::vector<Series> series_;
  std::vector<std::pair<double, std::string>> xticks_;
};

}  // namespace fatlens
