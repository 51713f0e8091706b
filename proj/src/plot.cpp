#include "wnos/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace wnos {

namespace {

const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

std::string num(double v) {
  char b[32];
  std::snprintf(b, sizeof b, "%.4g", v);
  return b;
}

std::string escape(const std::string& s) {
  std::string o;
  for (char c : s) {
    if (c == '<') o += "&lt;";
    else if (c == '>') o += "&gt;";
    else if (c == '&') o += "&amp;";
    else o += c;
  }
  return o;
}

}  // namespace

std::string svg_line_chart(const std::string& title, const std::string& y_label, const std::vector<Series>& series,
                           double x0) {
  const double W = 800, H = 400, ml = 70, mr = 150, mt = 40, mb = 50;
  std::size_t n = 0;
  double ymax = 0;
  for (const auto& s : series) {
    n = std::max(n, s.y.size());
    for (double v : s.y)
      if (std::isfinite(v)) ymax = std::max(ymax, v);
  }
  if (ymax <= 0) ymax = 1;
  double xspan = n > 1 ? static_cast<double>(n - 1) : 1.0;
  auto px = [&](std::size_t i) { return ml + (W - ml - mr) * static_cast<double>(i) / xspan; };
  auto py = [&](double v) { return H - mb - (H - mt - mb) * v / ymax; };

  std::string o = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"800\" height=\"400\" font-family=\"sans-serif\" "
                  "font-size=\"12\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o += "<text x=\"" + num(W / 2) + "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" + escape(title) + "</text>\n";
  o += "<line x1=\"" + num(ml) + "\" y1=\"" + num(H - mb) + "\" x2=\"" + num(W - mr) + "\" y2=\"" + num(H - mb) +
       "\" stroke=\"black\"/>\n";
  o += "<line x1=\"" + num(ml) + "\" y1=\"" + num(mt) + "\" x2=\"" + num(ml) + "\" y2=\"" + num(H - mb) +
       "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    double v = ymax * k / 4;
    o += "<text x=\"" + num(ml - 6) + "\" y=\"" + num(py(v) + 4) + "\" text-anchor=\"end\">" + num(v) + "</text>\n";
    std::size_t i = static_cast<std::size_t>(std::lround(xspan * k / 4));
    o += "<text x=\"" + num(px(i)) + "\" y=\"" + num(H - mb + 16) + "\" text-anchor=\"middle\">" +
         num(x0 + static_cast<double>(i)) + "</text>\n";
  }
  o += "<text x=\"" + num((ml + W - mr) / 2) + "\" y=\"" + num(H - 10) + "\" text-anchor=\"middle\">slot</text>\n";
  o += "<text transform=\"translate(16," + num(H / 2) + ") rotate(-90)\" text-anchor=\"middle\">" + escape(y_label) +
       "</text>\n";
  // Long runs are thinned to at most ~1000 points per line.
  std::size_t stride = std::max<std::size_t>(1, n / 1000);
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* color = kColors[k % (sizeof kColors / sizeof *kColors)];
    std::string pts;
    for (std::size_t i = 0; i < s.y.size(); i += stride)
      if (std::isfinite(s.y[i])) pts += num(px(i)) + "," + num(py(s.y[i])) + " ";
    o += "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"1.5\" points=\"" + pts +
         "\"/>\n";
    double ly = mt + 18.0 * static_cast<double>(k);
    o += "<line x1=\"" + num(W - mr + 10) + "\" y1=\"" + num(ly) + "\" x2=\"" + num(W - mr + 30) + "\" y2=\"" +
         num(ly) + "\" stroke=\"" + color + "\" stroke-width=\"2\"/>\n";
    o += "<text x=\"" + num(W - mr + 36) + "\" y=\"" + num(ly + 4) + "\">" + escape(s.name) + "</text>\n";
  }
  return o + "</svg>\n";
}

std::string throughput_svg(const MetricsLog& log) {
  std::vector<Series> series;
  std::size_t S = log.slots.empty() ? 0 : log.slots.front().throughput_pps.size();
  for (std::size_t s = 0; s < S; ++s) {
    Series se{"session " + std::to_string(s), {}};
    for (const auto& r : log.slots) se.y.push_back(r.throughput_pps[s]);
    series.push_back(std::move(se));
  }
  return svg_line_chart(log.scheme + ": end-to-end throughput", "packets/s", series);
}

std::string power_svg(const MetricsLog& log) {
  std::vector<Series> series;
  std::size_t N = log.slots.empty() ? 0 : log.slots.front().node_power_mw.size();
  for (std::size_t n = 0; n < N; ++n) {
    Series se{"node " + std::to_string(n), {}};
    bool active = false;
    for (const auto& r : log.slots) {
      se.y.push_back(r.node_power_mw[n]);
      active = active || r.node_power_mw[n] > 0;
    }
    if (active) series.push_back(std::move(se));
  }
  return svg_line_chart(log.scheme + ": transmit power", "mW", series);
}

}  // namespace wnos
