#pragma once

#include <optional>
#include <string>
#include <vector>

namespace perspectra {

struct ScatterPlot {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<double> x;
  std::vector<double> y;
  // Optional per-point value mapped onto a blue-white-red scale around 0.
  std::vector<double> color;
  std::string color_label;
  bool zero_line = true;
};

struct BarSeries {
  std::string name;
  std::vector<double> values;  // one per category
};

struct BarChart {
  std::string title;
  std::string y_label;
  std::vector<std::string> categories;
  std::vector<BarSeries> series;
  std::optional<double> reference_line;
};

std::string scatter_svg(const ScatterPlot& plot);
std::string bar_chart_svg(const BarChart& chart);

void write_text_file(const std::string& path, const std::string& content);

}  // namespace perspectra
