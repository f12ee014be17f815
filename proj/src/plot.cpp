#include "svhmc/plot.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

#include "svhmc/numfmt.hpp"

namespace svhmc::plot {

std::string xml_escape(const std::string& text) {
  std::string out;
  out.reserve(text.size());
  for (char c : text) {
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

namespace {

struct Frame {
  Canvas c;
  std::size_t n;
  double lo, hi;

  double x(std::size_t i) const {
    const double w = c.width - 2.0 * c.margin;
    return c.margin + (n <= 1 ? 0.5 * w : w * static_cast<double>(i) / static_cast<double>(n - 1));
  }
  double y(double v) const {
    const double h = c.height - 2.0 * c.margin;
    const double span = hi > lo ? hi - lo : 1.0;
    return c.height - c.margin - h * (v - lo) / span;
  }
};

std::string pt(double x, double y) { return fixed(x, 2) + "," + fixed(y, 2); }

void open(std::ostringstream& os, const Frame& f, const std::string& title, const std::string& metadata) {
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << f.c.width << "\" height=\""
     << f.c.height << "\" viewBox=\"0 0 " << f.c.width << ' ' << f.c.height << "\">\n";
  if (!metadata.empty()) os << "<metadata>" << xml_escape(metadata) << "</metadata>\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << f.c.margin << "\" y=\"" << f.c.margin / 2 + 6
     << "\" font-family=\"sans-serif\" font-size=\"14\">" << xml_escape(title) << "</text>\n";
  const double x0 = f.c.margin, x1 = f.c.width - f.c.margin;
  const double y0 = f.c.margin, y1 = f.c.height - f.c.margin;
  os << "<polyline fill=\"none\" stroke=\"#444\" stroke-width=\"1\" points=\"" << pt(x0, y0) << ' '
     << pt(x0, y1) << ' ' << pt(x1, y1) << "\"/>\n";
  for (double v : {f.lo, f.hi})
    os << "<text x=\"" << x0 - 4 << "\" y=\"" << fixed(f.y(v) + 4, 2)
       << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">" << fixed(v, 3)
       << "</text>\n";
  os << "<text x=\"" << x1 << "\" y=\"" << y1 + 16
     << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">" << f.n << "</text>\n";
}

void polyline(std::ostringstream& os, const Frame& f, std::span<const double> v, const char* cls,
              const char* stroke, double width) {
  os << "<polyline class=\"" << cls << "\" fill=\"none\" stroke=\"" << stroke << "\" stroke-width=\""
     << fixed(width, 1) << "\" points=\"";
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? " " : "") << pt(f.x(i), f.y(v[i]));
  os << "\"/>\n";
}

}  // namespace

std::string returns_svg(std::span<const double> y, const std::string& title,
                        const std::string& metadata, const Canvas& canvas) {
  if (y.empty()) throw std::invalid_argument("returns_svg: empty series");
  const auto [mn, mx] = std::minmax_element(y.begin(), y.end());
  Frame f{canvas, y.size(), *mn, *mx};
  std::ostringstream os;
  open(os, f, title, metadata);
  polyline(os, f, y, "returns", "#1f4e79", 0.8);
  os << "</svg>\n";
  return os.str();
}

std::string volatility_svg(std::span<const double> mean, std::span<const double> lower,
                           std::span<const double> upper, std::span<const double> reference,
                           const std::string& title, const std::string& metadata,
                           const Canvas& canvas) {
  if (mean.empty()) throw std::invalid_argument("volatility_svg: empty series");
  if (lower.size() != mean.size() || upper.size() != mean.size() ||
      (!reference.empty() && reference.size() != mean.size()))
    throw std::invalid_argument("volatility_svg: series lengths differ");
  double lo = *std::min_element(lower.begin(), lower.end());
  double hi = *std::max_element(upper.begin(), upper.end());
  if (!reference.empty()) {
    lo = std::min(lo, *std::min_element(reference.begin(), reference.end()));
    hi = std::max(hi, *std::max_element(reference.begin(), reference.end()));
  }
  Frame f{canvas, mean.size(), std::min(0.0, lo), hi};
  std::ostringstream os;
  open(os, f, title, metadata);
  os << "<polygon class=\"band\" fill=\"#9ecae1\" fill-opacity=\"0.6\" stroke=\"none\" points=\"";
  for (std::size_t i = 0; i < upper.size(); ++i) os << (i ? " " : "") << pt(f.x(i), f.y(upper[i]));
  for (std::size_t i = lower.size(); i-- > 0;) os << ' ' << pt(f.x(i), f.y(lower[i]));
  os << "\"/>\n";
  polyline(os, f, mean, "mean", "#08519c", 1.2);
  if (!reference.empty()) polyline(os, f, reference, "reference", "#cb181d", 0.8);
  os << "</svg>\n";
  return os.str();
}

}  // namespace svhmc::plot
