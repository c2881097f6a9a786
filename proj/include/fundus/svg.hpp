#pragma once

#include <optional>
#include <string>
#include <vector>

#include "fundus/stats.hpp"

namespace fundus::svg {

struct Series {
  std::string label;
  std::vector<std::pair<double, double>> points;
  std::vector<double> err;  // optional symmetric error bars, per point
};

struct ChartOptions {
  std::string title, x_label, y_label;
  std::optional<double> x_min, x_max, y_min, y_max;
  bool diagonal = false;  // y = x reference line
};

// Deterministic standalone SVG (no timestamps or external refs).
std::string line_chart(const std::vector<Series>& series,
                       const ChartOptions& opts);

std::string roc_chart(const stats::RocCurve& curve, const std::string& title);

}  // namespace fundus::svg
