#pragma once

// Text/CSV tables and static SVG bar charts over an aggregate table.

#include <string>
#include <vector>

#include "uptodate/harness/harness.hpp"

namespace uptodate::report {

/// Fixed 3-decimal rendering used by tables, CSV and chart labels.
std::string fmt3(double v);

/// Aligned columns: method display name, then the scenario's short-names.
std::string render_table(const harness::AggregateTable& table);
/// Header `method,<metric keys>`; rows keyed by method id.
std::string render_csv(const harness::AggregateTable& table);

struct Bar {
  std::string label;
  double value = 0.0;
};

struct Panel {
  std::string title;
  std::string y_label;
  std::vector<Bar> bars;
};

struct Chart {
  std::string file_name;
  std::string title;
  std::vector<Panel> panels;
};

/// The figure set for the table's scenario.
std::vector<Chart> charts_for(const harness::AggregateTable& table);

/// Bar height is value * pixels-per-unit; the axis top is 1 or the next integer
/// above the largest value. Each rect carries data-value with the 3-decimal value.
std::string render_svg(const Chart& chart);

}  // namespace uptodate::report
