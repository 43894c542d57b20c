#pragma once

#include <string>
#include <vector>

namespace physio::svg {

struct Bar {
  std::string label;
  double value = 0.0;
};

std::string bar_chart(const std::vector<Bar>& bars, const std::string& title, const std::string& x_label,
                      const std::string& y_label);

struct Series {
  std::string name;
  std::string color;  // any SVG colour
  std::vector<double> x, y;
};

struct Line {
  std::string name;
  std::string color;
  double intercept = 0.0;
  double slope = 0.0;
};

/// One panel per predictor would be drawn by calling this once each.
std::string scatter(const std::vector<Series>& points, const std::vector<Line>& lines, const std::string& title,
                    const std::string& x_label, const std::string& y_label);

/// Stacks panels vertically into one document.
std::string stack(const std::vector<std::string>& panels);

std::string escape(const std::string& text);

}  // namespace physio::svg
