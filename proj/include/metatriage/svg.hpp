#pragma once

#include <string>
#include <utility>
#include <vector>

namespace metatriage::svg {

struct Series {
  std::string name;
  std::vector<std::pair<double, double>> points;
};

struct ChartOptions {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool unit_square = false;  // fix both axes to [0,1] and draw the diagonal
  bool log2_x = false;
};

/// Static line chart with a legend; output depends only on the arguments.
std::string line_chart(const std::vector<Series>& series, const ChartOptions& options);

}  // namespace metatriage::svg
