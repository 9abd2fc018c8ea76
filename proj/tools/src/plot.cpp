#include "plot.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "flowslm/common.hpp"

namespace flowslm::cli {

namespace {

constexpr int kWidth = 720, kHeight = 420;
constexpr int kLeft = 70, kRight = 170, kTop = 40, kBottom = 50;
const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(4);
  os << v;
  return os.str();
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      default: out += c;
    }
  }
  return out;
}

void finish(const std::filesystem::path& path, const std::ostringstream& body) {
  std::ofstream os(path, std::ios::trunc);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << body.str() << "</svg>\n";
  if (!os) throw IoError("cannot write plot " + path.string());
}

}  // namespace

void write_line_chart(const std::filesystem::path& path, const std::string& title,
                      const std::string& x_label, const std::vector<Series>& series, bool log_y) {
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  auto ty = [&](double y) { return log_y ? std::log10(std::max(y, 1e-12)) : y; };
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, ty(s.y[i]));
      y1 = std::max(y1, ty(s.y[i]));
    }
  }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 == x0) x1 = x0 + 1;
  if (y1 == y0) y1 = y0 + 1;
  const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  auto px = [&](double x) { return kLeft + (x - x0) / (x1 - x0) * pw; };
  auto py = [&](double y) { return kTop + (1.0 - (ty(y) - y0) / (y1 - y0)) * ph; };

  std::ostringstream b;
  b << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
    << escape(title) << "</text>\n";
  b << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << pw << "\" height=\"" << ph
    << "\" fill=\"none\" stroke=\"#444\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double fy = y0 + (y1 - y0) * i / 4.0;
    const double yy = kTop + (1.0 - i / 4.0) * ph;
    b << "<line x1=\"" << kLeft << "\" x2=\"" << kLeft + pw << "\" y1=\"" << yy << "\" y2=\"" << yy
      << "\" stroke=\"#ddd\"/>\n";
    b << "<text x=\"" << kLeft - 6 << "\" y=\"" << yy + 4 << "\" text-anchor=\"end\">"
      << fmt(log_y ? std::pow(10.0, fy) : fy) << "</text>\n";
    const double fx = x0 + (x1 - x0) * i / 4.0;
    b << "<text x=\"" << px(fx) << "\" y=\"" << kTop + ph + 18 << "\" text-anchor=\"middle\">"
      << fmt(fx) << "</text>\n";
  }
  b << "<text x=\"" << kLeft + pw / 2 << "\" y=\"" << kHeight - 10 << "\" text-anchor=\"middle\">"
    << escape(x_label) << "</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* color = kColors[k % 6];
    b << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) b << px(s.x[i]) << "," << py(s.y[i]) << " ";
    b << "\"/>\n";
    const int ly = kTop + 16 + static_cast<int>(k) * 18;
    b << "<line x1=\"" << kWidth - kRight + 12 << "\" x2=\"" << kWidth - kRight + 32 << "\" y1=\"" << ly - 4
      << "\" y2=\"" << ly - 4 << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    b << "<text x=\"" << kWidth - kRight + 38 << "\" y=\"" << ly << "\">" << escape(s.label) << "</text>\n";
  }
  finish(path, b);
}

void write_bar_chart(const std::filesystem::path& path, const std::string& title,
                     const std::vector<std::string>& series_names, const std::vector<BarGroup>& groups) {
  double ymax = 0.0;
  for (const auto& g : groups) {
    for (double v : g.values) {
      if (std::isfinite(v)) ymax = std::max(ymax, v);
    }
  }
  if (ymax <= 0.0) ymax = 1.0;
  const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  const double gw = groups.empty() ? pw : pw / static_cast<double>(groups.size());
  const double bw = gw * 0.8 / std::max<std::size_t>(1, series_names.size());

  std::ostringstream b;
  b << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
    << escape(title) << "</text>\n";
  b << "<line x1=\"" << kLeft << "\" x2=\"" << kLeft + pw << "\" y1=\"" << kTop + ph << "\" y2=\""
    << kTop + ph << "\" stroke=\"#444\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double yy = kTop + (1.0 - i / 4.0) * ph;
    b << "<line x1=\"" << kLeft << "\" x2=\"" << kLeft + pw << "\" y1=\"" << yy << "\" y2=\"" << yy
      << "\" stroke=\"#eee\"/>\n";
    b << "<text x=\"" << kLeft - 6 << "\" y=\"" << yy + 4 << "\" text-anchor=\"end\">"
      << fmt(ymax * i / 4.0) << "</text>\n";
  }
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const double gx = kLeft + gw * static_cast<double>(g) + gw * 0.1;
    for (std::size_t k = 0; k < groups[g].values.size(); ++k) {
      const double v = groups[g].values[k];
      if (!std::isfinite(v)) continue;
      const double h = v / ymax * ph;
      b << "<rect x=\"" << gx + bw * static_cast<double>(k) << "\" y=\"" << kTop + ph - h << "\" width=\""
        << bw * 0.95 << "\" height=\"" << h << "\" fill=\"" << kColors[k % 6] << "\"/>\n";
    }
    b << "<text x=\"" << gx + gw * 0.4 << "\" y=\"" << kTop + ph + 16 << "\" text-anchor=\"middle\">"
      << escape(groups[g].label) << "</text>\n";
  }
  for (std::size_t k = 0; k < series_names.size(); ++k) {
    const int ly = kTop + 16 + static_cast<int>(k) * 18;
    b << "<rect x=\"" << kWidth - kRight + 12 << "\" y=\"" << ly - 10 << "\" width=\"12\" height=\"12\" fill=\""
      << kColors[k % 6] << "\"/>\n";
    b << "<text x=\"" << kWidth - kRight + 30 << "\" y=\"" << ly << "\">" << escape(series_names[k])
      << "</text>\n";
  }
  finish(path, b);
}

}  // namespace flowslm::cli
