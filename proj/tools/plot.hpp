#pragma once

#include <string>
#include <vector>

namespace glyco {

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;  // NaN marks a gap
  std::string color;
  bool dots = false;
};

/// Minimal standalone SVG line chart.
std::string svg_line_plot(const std::string& title, const std::string& x_label, const std::string& y_label,
                          const std::vector<Series>& series, int width = 720, int height = 400);

}  // namespace glyco
