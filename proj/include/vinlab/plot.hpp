#pragma once

#include <string>
#include <utility>
#include <vector>

namespace vinlab {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

struct ChartOptions {
  int width = 800;
  int height = 480;
  std::string title;
  std::string x_label = "step";
  std::string y_label = "average test reward";
};

// Line chart with linear axes, one polyline per series. Byte-identical output
// for identical input. Throws std::invalid_argument on an empty series list or
// a series with no points.
std::string render_line_chart(const std::vector<Series>& series, const ChartOptions& options = {});

// Reads back what render_line_chart wrote: the data range recorded on the
// root element and every polyline mapped back into data coordinates.
struct ParsedChart {
  double x_min = 0.0, x_max = 0.0, y_min = 0.0, y_max = 0.0;
  std::vector<std::string> labels;
  std::vector<std::vector<std::pair<double, double>>> polylines;
};
ParsedChart parse_line_chart(const std::string& svg);

}  // namespace vinlab
