#pragma once

#include <string>
#include <vector>

#include "wnos/sim.hpp"

namespace wnos {

struct Series {
  std::string name;
  std::vector<double> y;
};

// Static SVG line chart; x is the sample index offset by x0.
std::string svg_line_chart(const std::string& title, const std::string& y_label, const std::vector<Series>& series,
                           double x0 = 1.0);

std::string throughput_svg(const MetricsLog& log);  // one line per session
std::string power_svg(const MetricsLog& log);       // one line per transmitting node

}  // namespace wnos
