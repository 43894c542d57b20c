#include "physio/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

namespace physio::svg {

namespace {

constexpr double kWidth = 640, kHeight = 400;
constexpr double kLeft = 70, kRight = 20, kTop = 40, kBottom = 60;

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string open_svg(double w, double h) {
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt("%.0f", w) + "\" height=\"" + fmt("%.0f", h) +
         "\" viewBox=\"0 0 " + fmt("%.0f", w) + " " + fmt("%.0f", h) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
}

std::string text(double x, double y, const std::string& s, const char* anchor = "middle", const char* extra = "") {
  return "<text x=\"" + fmt("%.1f", x) + "\" y=\"" + fmt("%.1f", y) + "\" text-anchor=\"" + anchor + "\"" + extra +
         ">" + escape(s) + "</text>\n";
}

std::string frame(const std::string& title, const std::string& xl, const std::string& yl) {
  std::string s;
  s += text(kWidth / 2, 22, title, "middle", " font-size=\"14\"");
  s += "<rect x=\"" + fmt("%.1f", kLeft) + "\" y=\"" + fmt("%.1f", kTop) + "\" width=\"" +
       fmt("%.1f", kWidth - kLeft - kRight) + "\" height=\"" + fmt("%.1f", kHeight - kTop - kBottom) +
       "\" fill=\"none\" stroke=\"#444\"/>\n";
  s += text(kWidth / 2, kHeight - 12, xl);
  s += "<text x=\"16\" y=\"" + fmt("%.1f", kHeight / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " +
       fmt("%.1f", kHeight / 2) + ")\">" + escape(yl) + "</text>\n";
  return s;
}

// Round numbers for axis ticks.
std::vector<double> ticks(double lo, double hi, int target = 5) {
  if (!(hi > lo)) return {lo};
  const double raw = (hi - lo) / target;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 5.0, 10.0})
    if (m * mag >= raw) {
      step = m * mag;
      break;
    }
  std::vector<double> t;
  for (double v = std::ceil(lo / step) * step; v <= hi + 1e-9 * step; v += step) t.push_back(std::abs(v) < 1e-12 ? 0.0 : v);
  return t;
}

}  // namespace

std::string escape(const std::string& in) {
  std::string out;
  for (char c : in) {
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

std::string bar_chart(const std::vector<Bar>& bars, const std::string& title, const std::string& x_label,
                      const std::string& y_label) {
  double top = 0.0;
  for (const auto& b : bars) top = std::max(top, b.value);
  top = top > 0.0 ? top * 1.15 : 1.0;
  const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  auto ymap = [&](double v) { return kTop + ph * (1.0 - v / top); };

  std::string s = open_svg(kWidth, kHeight) + frame(title, x_label, y_label);
  for (double t : ticks(0.0, top)) {
    s += "<line x1=\"" + fmt("%.1f", kLeft - 4) + "\" x2=\"" + fmt("%.1f", kLeft) + "\" y1=\"" + fmt("%.1f", ymap(t)) +
         "\" y2=\"" + fmt("%.1f", ymap(t)) + "\" stroke=\"#444\"/>\n";
    s += text(kLeft - 6, ymap(t) + 4, fmt("%g", t), "end");
  }
  const double slot = bars.empty() ? pw : pw / static_cast<double>(bars.size());
  for (std::size_t i = 0; i < bars.size(); ++i) {
    const double x = kLeft + slot * (static_cast<double>(i) + 0.2);
    const double y = ymap(bars[i].value);
    s += "<rect x=\"" + fmt("%.1f", x) + "\" y=\"" + fmt("%.1f", y) + "\" width=\"" + fmt("%.1f", slot * 0.6) +
         "\" height=\"" + fmt("%.1f", kTop + ph - y) + "\" fill=\"#4477aa\"/>\n";
    s += text(x + slot * 0.3, y - 4, fmt("%.2f", bars[i].value));
    s += text(x + slot * 0.3, kTop + ph + 16, bars[i].label);
  }
  return s + "</svg>\n";
}

std::string scatter(const std::vector<Series>& points, const std::vector<Line>& lines, const std::string& title,
                    const std::string& x_label, const std::string& y_label) {
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : points) {
    for (double v : s.x) x0 = std::min(x0, v), x1 = std::max(x1, v);
    for (double v : s.y) y0 = std::min(y0, v), y1 = std::max(y1, v);
  }
  if (!(x1 > x0)) x0 -= 1.0, x1 += 1.0;
  if (!(y1 > y0)) y0 -= 1.0, y1 += 1.0;
  const double padx = 0.05 * (x1 - x0), pady = 0.05 * (y1 - y0);
  x0 -= padx, x1 += padx, y0 -= pady, y1 += pady;
  const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  auto xm = [&](double v) { return kLeft + pw * (v - x0) / (x1 - x0); };
  auto ym = [&](double v) { return kTop + ph * (1.0 - (v - y0) / (y1 - y0)); };

  std::string s = open_svg(kWidth, kHeight) + frame(title, x_label, y_label);
  for (double t : ticks(x0, x1)) s += text(xm(t), kTop + ph + 16, fmt("%g", t));
  for (double t : ticks(y0, y1)) s += text(kLeft - 6, ym(t) + 4, fmt("%g", t), "end");
  for (const auto& ser : points)
    for (std::size_t i = 0; i < std::min(ser.x.size(), ser.y.size()); ++i)
      s += "<circle cx=\"" + fmt("%.1f", xm(ser.x[i])) + "\" cy=\"" + fmt("%.1f", ym(ser.y[i])) +
           "\" r=\"2.5\" fill=\"" + escape(ser.color) + "\" fill-opacity=\"0.7\"/>\n";
  s += "<clipPath id=\"plot\"><rect x=\"" + fmt("%.1f", kLeft) + "\" y=\"" + fmt("%.1f", kTop) + "\" width=\"" +
       fmt("%.1f", pw) + "\" height=\"" + fmt("%.1f", ph) + "\"/></clipPath>\n";
  for (const auto& l : lines)
    s += "<line clip-path=\"url(#plot)\" x1=\"" + fmt("%.1f", xm(x0)) + "\" y1=\"" +
         fmt("%.1f", ym(l.intercept + l.slope * x0)) + "\" x2=\"" + fmt("%.1f", xm(x1)) + "\" y2=\"" +
         fmt("%.1f", ym(l.intercept + l.slope * x1)) + "\" stroke=\"" + escape(l.color) + "\" stroke-width=\"2\"/>\n";

  double ly = kTop + 14;
  auto legend = [&](const std::string& name, const std::string& color) {
    s += "<rect x=\"" + fmt("%.1f", kLeft + 8) + "\" y=\"" + fmt("%.1f", ly - 9) + "\" width=\"10\" height=\"10\" fill=\"" +
         escape(color) + "\"/>\n";
    s += text(kLeft + 24, ly, name, "start");
    ly += 16;
  };
  for (const auto& ser : points) legend(ser.name, ser.color);
  for (const auto& l : lines) legend(l.name, l.color);
  return s + "</svg>\n";
}

std::string stack(const std::vector<std::string>& panels) {
  std::string s = open_svg(kWidth, kHeight * static_cast<double>(std::max<std::size_t>(1, panels.size())));
  for (std::size_t i = 0; i < panels.size(); ++i)
    s += "<g transform=\"translate(0 " + fmt("%.0f", kHeight * static_cast<double>(i)) + ")\">\n" + panels[i] + "</g>\n";
  return s + "</svg>\n";
}

}  // namespace physio::svg
