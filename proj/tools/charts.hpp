#pragma once

#include <string>
#include <vector>

namespace trafficview::cli {

struct BarSeries {
  std::string name;
  std::vector<double> values;  // one per category
};

/// Grouped bar chart as a standalone SVG document.
std::string grouped_bar_svg(const std::string& title, const std::string& y_label,
                            const std::vector<std::string>& categories, const std::vector<BarSeries>& series);

}  // namespace trafficview::cli
