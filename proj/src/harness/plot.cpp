// Copyright 2026 The EMERT Lab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "emert/harness.hpp"

namespace emert::harness {

namespace {

constexpr double kWidth = 640, kHeight = 400;
constexpr double kLeft = 70, kRight = 150, kTop = 40, kBottom = 60;
constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else out += c;
  }
  return out;
}

std::string num(double v) {
  std::ostringstream os;
  os << std::setprecision(4) << v;
  return os.str();
}

struct Range {
  double lo, hi;
  double map(double v, double a, double b) const { return hi > lo ? a + (v - lo) / (hi - lo) * (b - a) : (a + b) / 2; }
};

void header(std::ostringstream& os, const std::string& title) {
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << escape(title)
     << "</text>\n";
}

void y_axis(std::ostringstream& os, const Range& y) {
  const double x0 = kLeft, y0 = kHeight - kBottom, y1 = kTop;
  os << "<line x1=\"" << x0 << "\" y1=\"" << y0 << "\" x2=\"" << x0 << "\" y2=\"" << y1 << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double v = y.lo + (y.hi - y.lo) * i / 4.0;
    const double py = y.map(v, y0, y1);
    os << "<line x1=\"" << x0 - 4 << "\" y1=\"" << py << "\" x2=\"" << x0 << "\" y2=\"" << py
       << "\" stroke=\"black\"/>\n<text x=\"" << x0 - 6 << "\" y=\"" << py + 4 << "\" text-anchor=\"end\">"
       << num(v) << "</text>\n";
  }
}

void legend(std::ostringstream& os, const std::vector<Series>& series) {
  for (std::size_t i = 0; i < series.size(); ++i) {
    const double y = kTop + 10 + 18.0 * static_cast<double>(i);
    os << "<rect x=\"" << kWidth - kRight + 15 << "\" y=\"" << y - 9 << "\" width=\"10\" height=\"10\" fill=\""
       << kPalette[i % 6] << "\"/>\n<text x=\"" << kWidth - kRight + 30 << "\" y=\"" << y << "\">"
       << escape(series[i].name) << "</text>\n";
  }
}

Range y_range(const std::vector<Series>& series, bool from_zero) {
  double lo = from_zero ? 0.0 : INFINITY, hi = -INFINITY;
  for (const auto& s : series)
    for (double v : s.y)
      if (std::isfinite(v)) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
  if (!std::isfinite(lo) || !std::isfinite(hi)) return {0.0, 1.0};
  if (hi <= lo) hi = lo + 1.0;
  const double pad = 0.05 * (hi - lo);
  return {from_zero ? lo : lo - pad, hi + pad};
}

}  // namespace

std::string line_plot_svg(const std::string& title, const std::string& x_label, const std::string& y_label,
                          const std::vector<Series>& series) {
  std::ostringstream os;
  header(os, title);
  Range x{INFINITY, -INFINITY};
  for (const auto& s : series)
    for (double v : s.x) {
      x.lo = std::min(x.lo, v);
      x.hi = std::max(x.hi, v);
    }
  if (!std::isfinite(x.lo)) x = {0.0, 1.0};
  const Range y = y_range(series, false);
  const double x0 = kLeft, x1 = kWidth - kRight, y0 = kHeight - kBottom, y1 = kTop;
  y_axis(os, y);
  os << "<line x1=\"" << x0 << "\" y1=\"" << y0 << "\" x2=\"" << x1 << "\" y2=\"" << y0 << "\" stroke=\"black\"/>\n";
  std::vector<double> ticks;
  for (const auto& s : series) ticks.insert(ticks.end(), s.x.begin(), s.x.end());
  std::sort(ticks.begin(), ticks.end());
  ticks.erase(std::unique(ticks.begin(), ticks.end()), ticks.end());
  for (double t : ticks)
    os << "<text x=\"" << x.map(t, x0, x1) << "\" y=\"" << y0 + 16 << "\" text-anchor=\"middle\">" << num(t)
       << "</text>\n";
  os << "<text x=\"" << (x0 + x1) / 2 << "\" y=\"" << kHeight - 15 << "\" text-anchor=\"middle\">"
     << escape(x_label) << "</text>\n<text x=\"18\" y=\"" << (y0 + y1) / 2
     << "\" text-anchor=\"middle\" transform=\"rotate(-90 18 " << (y0 + y1) / 2 << ")\">" << escape(y_label)
     << "</text>\n";
  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& s = series[i];
    os << "<polyline fill=\"none\" stroke=\"" << kPalette[i % 6] << "\" stroke-width=\"2\" points=\"";
    for (std::size_t j = 0; j < std::min(s.x.size(), s.y.size()); ++j)
      os << x.map(s.x[j], x0, x1) << ',' << y.map(s.y[j], y0, y1) << ' ';
    os << "\"/>\n";
    for (std::size_t j = 0; j < std::min(s.x.size(), s.y.size()); ++j)
      os << "<circle cx=\"" << x.map(s.x[j], x0, x1) << "\" cy=\"" << y.map(s.y[j], y0, y1) << "\" r=\"3\" fill=\""
         << kPalette[i % 6] << "\"/>\n";
  }
  legend(os, series);
  os << "</svg>\n";
  return os.str();
}

std::string bar_plot_svg(const std::string& title, const std::vector<std::string>& categories,
                         const std::vector<Series>& series) {
  std::ostringstream os;
  header(os, title);
  const Range y = y_range(series, true);
  const double x0 = kLeft, x1 = kWidth - kRight, y0 = kHeight - kBottom, y1 = kTop;
  y_axis(os, y);
  os << "<line x1=\"" << x0 << "\" y1=\"" << y0 << "\" x2=\"" << x1 << "\" y2=\"" << y0 << "\" stroke=\"black\"/>\n";
  const double group = (x1 - x0) / static_cast<double>(std::max<std::size_t>(1, categories.size()));
  const double bar = 0.8 * group / static_cast<double>(std::max<std::size_t>(1, series.size()));
  for (std::size_t c = 0; c < categories.size(); ++c) {
    const double gx = x0 + group * static_cast<double>(c) + 0.1 * group;
    for (std::size_t s = 0; s < series.size(); ++s) {
      if (c >= series[s].y.size() || !std::isfinite(series[s].y[c])) continue;
      const double top = y.map(series[s].y[c], y0, y1);
      os << "<rect x=\"" << gx + bar * static_cast<double>(s) << "\" y=\"" << top << "\" width=\"" << bar
         << "\" height=\"" << y0 - top << "\" fill=\"" << kPalette[s % 6] << "\"/>\n";
    }
    os << "<text x=\"" << gx + 0.4 * group << "\" y=\"" << y0 + 16 << "\" text-anchor=\"middle\">"
       << escape(categories[c]) << "</text>\n";
  }
  legend(os, series);
  os << "</svg>\n";
  return os.str();
}

}  // namespace emert::harness
