#include "perspectra/plots.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "perspectra/error.hpp"

namespace perspectra {

namespace {

constexpr double kWidth = 640, kHeight = 420;
constexpr double kLeft = 70, kRight = 30, kTop = 40, kBottom = 60;

const char* kPalette[] = {"#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3", "#937860"};

std::string esc(const std::string& s) {
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

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", std::abs(v) < 1e-12 ? 0.0 : v);
  return buf;
}

struct Range {
  double lo, hi;
};

Range padded(const std::vector<double>& v, bool include_zero) {
  double lo = v.empty() ? 0.0 : *std::min_element(v.begin(), v.end());
  double hi = v.empty() ? 1.0 : *std::max_element(v.begin(), v.end());
  if (include_zero) {
    lo = std::min(lo, 0.0);
    hi = std::max(hi, 0.0);
  }
  if (!(hi > lo)) {
    lo -= 0.5;
    hi += 0.5;
  }
  double pad = 0.05 * (hi - lo);
  return {lo - pad, hi + pad};
}

std::string diverging(double v, double scale) {
  double t = scale > 0 ? std::clamp(v / scale, -1.0, 1.0) : 0.0;
  int r, g, b;
  if (t >= 0) {
    r = 255;
    g = b = static_cast<int>(std::lround(255 * (1 - t)));
  } else {
    b = 255;
    r = g = static_cast<int>(std::lround(255 * (1 + t)));
  }
  char buf[16];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, g, b);
  return buf;
}

void header(std::ostringstream& o, const std::string& title) {
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << esc(title)
    << "</text>\n";
}

void y_axis(std::ostringstream& o, Range y, const std::string& label) {
  const double h = kHeight - kTop - kBottom;
  for (int i = 0; i <= 4; ++i) {
    double v = y.lo + (y.hi - y.lo) * i / 4.0;
    double py = kTop + h - h * i / 4.0;
    o << "<line x1=\"" << kLeft - 4 << "\" y1=\"" << num(py) << "\" x2=\"" << kLeft << "\" y2=\"" << num(py)
      << "\" stroke=\"black\"/>\n"
      << "<text x=\"" << kLeft - 6 << "\" y=\"" << num(py + 4) << "\" text-anchor=\"end\">" << tick(v) << "</text>\n";
  }
  o << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\"" << kHeight - kBottom
    << "\" stroke=\"black\"/>\n"
    << "<text transform=\"translate(16," << kTop + h / 2 << ") rotate(-90)\" text-anchor=\"middle\">" << esc(label)
    << "</text>\n";
}

}  // namespace

std::string scatter_svg(const ScatterPlot& p) {
  std::ostringstream o;
  header(o, p.title);
  const double w = kWidth - kLeft - kRight, h = kHeight - kTop - kBottom;
  Range xr = padded(p.x, false), yr = padded(p.y, p.zero_line);
  auto px = [&](double v) { return kLeft + w * (v - xr.lo) / (xr.hi - xr.lo); };
  auto py = [&](double v) { return kTop + h - h * (v - yr.lo) / (yr.hi - yr.lo); };
  y_axis(o, yr, p.y_label);
  for (int i = 0; i <= 4; ++i) {
    double v = xr.lo + (xr.hi - xr.lo) * i / 4.0;
    o << "<text x=\"" << num(px(v)) << "\" y=\"" << kHeight - kBottom + 16 << "\" text-anchor=\"middle\">" << tick(v)
      << "</text>\n";
  }
  o << "<line x1=\"" << kLeft << "\" y1=\"" << kHeight - kBottom << "\" x2=\"" << kWidth - kRight << "\" y2=\""
    << kHeight - kBottom << "\" stroke=\"black\"/>\n"
    << "<text x=\"" << kLeft + w / 2 << "\" y=\"" << kHeight - 16 << "\" text-anchor=\"middle\">" << esc(p.x_label)
    << "</text>\n";
  if (p.zero_line) {
    o << "<line x1=\"" << kLeft << "\" y1=\"" << num(py(0)) << "\" x2=\"" << kWidth - kRight << "\" y2=\""
      << num(py(0)) << "\" stroke=\"#888\" stroke-dasharray=\"4 3\"/>\n";
  }
  double scale = 0.0;
  for (double c : p.color) scale = std::max(scale, std::abs(c));
  const std::size_t n = std::min(p.x.size(), p.y.size());
  for (std::size_t i = 0; i < n; ++i) {
    std::string fill = i < p.color.size() ? diverging(p.color[i], scale) : kPalette[0];
    o << "<circle cx=\"" << num(px(p.x[i])) << "\" cy=\"" << num(py(p.y[i])) << "\" r=\"3.5\" fill=\"" << fill
      << "\" stroke=\"#333\" stroke-width=\"0.5\"/>\n";
  }
  if (!p.color.empty()) {
    o << "<text x=\"" << kWidth - kRight << "\" y=\"" << kTop - 6 << "\" text-anchor=\"end\">" << esc(p.color_label)
      << ": blue &lt; 0 &lt; red (max |v| " << tick(scale) << ")</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

std::string bar_chart_svg(const BarChart& c) {
  std::ostringstream o;
  header(o, c.title);
  const double w = kWidth - kLeft - kRight, h = kHeight - kTop - kBottom;
  std::vector<double> all;
  for (const auto& s : c.series) all.insert(all.end(), s.values.begin(), s.values.end());
  if (c.reference_line) all.push_back(*c.reference_line);
  Range yr = padded(all, true);
  auto py = [&](double v) { return kTop + h - h * (v - yr.lo) / (yr.hi - yr.lo); };
  y_axis(o, yr, c.y_label);
  const std::size_t k = std::max<std::size_t>(c.categories.size(), 1);
  const std::size_t m = std::max<std::size_t>(c.series.size(), 1);
  const double slot = w / static_cast<double>(k);
  const double bar = slot * 0.8 / static_cast<double>(m);
  for (std::size_t i = 0; i < c.categories.size(); ++i) {
    double x0 = kLeft + slot * static_cast<double>(i) + slot * 0.1;
    for (std::size_t s = 0; s < c.series.size(); ++s) {
      if (i >= c.series[s].values.size()) continue;
      double v = c.series[s].values[i];
      double top = py(std::max(v, 0.0)), bottom = py(std::min(v, 0.0));
      o << "<rect x=\"" << num(x0 + bar * static_cast<double>(s)) << "\" y=\"" << num(top) << "\" width=\""
        << num(bar * 0.95) << "\" height=\"" << num(std::max(bottom - top, 0.5)) << "\" fill=\""
        << kPalette[s % std::size(kPalette)] << "\"/>\n";
    }
    o << "<text x=\"" << num(x0 + slot * 0.4) << "\" y=\"" << kHeight - kBottom + 16 << "\" text-anchor=\"middle\">"
      << esc(c.categories[i]) << "</text>\n";
  }
  o << "<line x1=\"" << kLeft << "\" y1=\"" << num(py(0)) << "\" x2=\"" << kWidth - kRight << "\" y2=\"" << num(py(0))
    << "\" stroke=\"black\"/>\n";
  if (c.reference_line) {
    o << "<line x1=\"" << kLeft << "\" y1=\"" << num(py(*c.reference_line)) << "\" x2=\"" << kWidth - kRight
      << "\" y2=\"" << num(py(*c.reference_line)) << "\" stroke=\"#888\" stroke-dasharray=\"4 3\"/>\n";
  }
  for (std::size_t s = 0; s < c.series.size(); ++s) {
    double lx = kLeft + 10 + 150 * static_cast<double>(s);
    o << "<rect x=\"" << num(lx) << "\" y=\"" << kHeight - 14 << "\" width=\"10\" height=\"10\" fill=\""
      << kPalette[s % std::size(kPalette)] << "\"/>\n"
      << "<text x=\"" << num(lx + 14) << "\" y=\"" << kHeight - 5 << "\">" << esc(c.series[s].name) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write '" + path + "'");
  out << content;
  if (!out) throw Error(ErrorCode::Io, "write failed for '" + path + "'");
}

}  // namespace perspectra
