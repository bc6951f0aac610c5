#include "charts.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "trafficview/common.hpp"
#include "trafficview/error.hpp"

namespace trafficview::cli {

namespace {

constexpr const char* kPalette[] = {"#4c78a8", "#f58518", "#54a24b", "#e45756"};

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

}  // namespace

std::string grouped_bar_svg(const std::string& title, const std::string& y_label,
                            const std::vector<std::string>& categories, const std::vector<BarSeries>& series) {
  if (categories.empty() || series.empty()) throw InvalidArgument("chart needs categories and series");
  for (const auto& s : series)
    if (s.values.size() != categories.size()) throw InvalidArgument("series " + s.name + " has the wrong length");

  const double width = 720, height = 400, left = 70, right = 20, top = 50, bottom = 60;
  const double plot_w = width - left - right;
  const double plot_h = height - top - bottom;
  double vmax = 0.0;
  for (const auto& s : series)
    for (double v : s.values) vmax = std::max(vmax, v);
  if (vmax <= 0.0) vmax = 1.0;
  vmax *= 1.1;

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height << "\" viewBox=\"0 0 "
     << width << ' ' << height << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << width / 2 << "\" y=\"28\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">"
     << xml_escape(title) << "</text>\n";
  os << "<text x=\"16\" y=\"" << top + plot_h / 2 << "\" transform=\"rotate(-90 16 " << top + plot_h / 2
     << ")\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" << xml_escape(y_label) << "</text>\n";
  os << "<line x1=\"" << left << "\" y1=\"" << top + plot_h << "\" x2=\"" << left + plot_w << "\" y2=\"" << top + plot_h
     << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + plot_h
     << "\" stroke=\"black\"/>\n";
  for (int tick = 0; tick <= 4; ++tick) {
    const double v = vmax * tick / 4.0;
    const double y = top + plot_h - plot_h * tick / 4.0;
    os << "<text x=\"" << left - 6 << "\" y=\"" << y + 4 << "\" text-anchor=\"end\" font-family=\"sans-serif\" "
       << "font-size=\"10\">" << format_fixed(v, 2) << "</text>\n";
  }

  const double group_w = plot_w / static_cast<double>(categories.size());
  const double bar_w = group_w * 0.8 / static_cast<double>(series.size());
  for (std::size_t c = 0; c < categories.size(); ++c) {
    const double gx = left + group_w * static_cast<double>(c) + group_w * 0.1;
    for (std::size_t s = 0; s < series.size(); ++s) {
      const double v = series[s].values[c];
      const double h = plot_h * std::max(v, 0.0) / vmax;
      os << "<rect class=\"bar\" data-series=\"" << xml_escape(series[s].name) << "\" data-category=\""
         << xml_escape(categories[c]) << "\" data-value=\"" << format_double(v) << "\" x=\""
         << gx + bar_w * static_cast<double>(s) << "\" y=\"" << top + plot_h - h << "\" width=\"" << bar_w
         << "\" height=\"" << h << "\" fill=\"" << kPalette[s % 4] << "\"/>\n";
    }
    os << "<text x=\"" << gx + group_w * 0.4 << "\" y=\"" << top + plot_h + 18
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" << xml_escape(categories[c])
       << "</text>\n";
  }
  for (std::size_t s = 0; s < series.size(); ++s) {
    const double lx = left + 10 + 110 * static_cast<double>(s);
    os << "<rect x=\"" << lx << "\" y=\"" << height - 22 << "\" width=\"12\" height=\"12\" fill=\"" << kPalette[s % 4]
       << "\"/>\n";
    os << "<text x=\"" << lx + 16 << "\" y=\"" << height - 12 << "\" font-family=\"sans-serif\" font-size=\"11\">"
       << xml_escape(series[s].name) << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace trafficview::cli
