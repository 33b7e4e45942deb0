#pragma once

#include <string>
#include <vector>

namespace grpolab {

struct PlotSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;  // same length as x; non-finite points are skipped
};

// Self-contained line plot: axes, ticks, legend, one polyline per series.
// Series colors cycle through a fixed palette in order.
std::string render_line_plot(const std::string& title,
                             const std::string& x_label,
                             const std::string& y_label,
                             const std::vector<PlotSeries>& series,
                             int width = 860, int height = 480);

void write_line_plot(const std::string& path, const std::string& title,
                     const std::string& x_label, const std::string& y_label,
                     const std::vector<PlotSeries>& series, int width = 860,
                     int height = 480);

}  // namespace grpolab
