#include "fundus/svg.hpp"

#include <algorithm>
#include <cmath>

#include "fundus/csv.hpp"

namespace fundus::svg {

namespace {

constexpr int kWidth = 640, kHeight = 480;
constexpr int kLeft = 64, kRight = 24, kTop = 40, kBottom = 48;

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                          "#ff7f0e", "#8c564b", "#e377c2", "#7f7f7f"};

std::string num(double v) {
  // Short fixed formatting for coordinates keeps files compact and stable.
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

}  // namespace

std::string line_chart(const std::vector<Series>& series,
                       const ChartOptions& opts) {
  double x_lo = opts.x_min.value_or(1e300), x_hi = opts.x_max.value_or(-1e300);
  double y_lo = opts.y_min.value_or(1e300), y_hi = opts.y_max.value_or(-1e300);
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.points.size(); ++i) {
      const auto& [x, y] = s.points[i];
      const double e = i < s.err.size() ? s.err[i] : 0.0;
      if (!opts.x_min) x_lo = std::min(x_lo, x);
      if (!opts.x_max) x_hi = std::max(x_hi, x);
      if (!opts.y_min) y_lo = std::min(y_lo, y - e);
      if (!opts.y_max) y_hi = std::max(y_hi, y + e);
    }
  }
  if (x_lo >= x_hi) x_hi = x_lo + 1.0;
  if (y_lo >= y_hi) y_hi = y_lo + 1.0;

  const double plot_w = kWidth - kLeft - kRight;
  const double plot_h = kHeight - kTop - kBottom;
  auto px = [&](double x) { return kLeft + (x - x_lo) / (x_hi - x_lo) * plot_w; };
  auto py = [&](double y) {
    return kHeight - kBottom - (y - y_lo) / (y_hi - y_lo) * plot_h;
  };

  std::string out;
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" +
         std::to_string(kWidth) + "\" height=\"" + std::to_string(kHeight) +
         "\" viewBox=\"0 0 " + std::to_string(kWidth) + " " +
         std::to_string(kHeight) + "\">\n";
  out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out += "<text x=\"" + num(kWidth / 2.0) +
         "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"16\">" + opts.title + "</text>\n";

  // frame + ticks
  out += "<rect x=\"" + num(kLeft) + "\" y=\"" + num(kTop) + "\" width=\"" +
         num(plot_w) + "\" height=\"" + num(plot_h) +
         "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double fx = x_lo + (x_hi - x_lo) * i / 5.0;
    const double fy = y_lo + (y_hi - y_lo) * i / 5.0;
    out += "<line x1=\"" + num(px(fx)) + "\" y1=\"" + num(kHeight - kBottom) +
           "\" x2=\"" + num(px(fx)) + "\" y2=\"" +
           num(kHeight - kBottom + 5) + "\" stroke=\"black\"/>\n";
    out += "<text x=\"" + num(px(fx)) + "\" y=\"" +
           num(kHeight - kBottom + 20) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"11\">" + tick_label(fx) + "</text>\n";
    out += "<line x1=\"" + num(kLeft - 5) + "\" y1=\"" + num(py(fy)) +
           "\" x2=\"" + num(kLeft) + "\" y2=\"" + num(py(fy)) +
           "\" stroke=\"black\"/>\n";
    out += "<text x=\"" + num(kLeft - 8) + "\" y=\"" + num(py(fy) + 4) +
           "\" text-anchor=\"end\" font-family=\"sans-serif\" "
           "font-size=\"11\">" + tick_label(fy) + "</text>\n";
  }
  out += "<text x=\"" + num(kLeft + plot_w / 2) + "\" y=\"" +
         num(kHeight - 10) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"13\">" + opts.x_label + "</text>\n";
  out += "<text x=\"16\" y=\"" + num(kTop + plot_h / 2) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"13\" transform=\"rotate(-90 16 " +
         num(kTop + plot_h / 2) + ")\">" + opts.y_label + "</text>\n";

  if (opts.diagonal) {
    out += "<line x1=\"" + num(px(x_lo)) + "\" y1=\"" + num(py(y_lo)) +
           "\" x2=\"" + num(px(x_hi)) + "\" y2=\"" + num(py(y_hi)) +
           "\" stroke=\"#aaaaaa\" stroke-dasharray=\"4 3\"/>\n";
  }

  for (std::size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    const std::string color = kPalette[si % (sizeof(kPalette) / sizeof(*kPalette))];
    std::string path;
    for (std::size_t i = 0; i < s.points.size(); ++i) {
      path += (i == 0 ? "M" : " L");
      path += num(px(s.points[i].first)) + " " + num(py(s.points[i].second));
    }
    out += "<path d=\"" + path + "\" fill=\"none\" stroke=\"" + color +
           "\" stroke-width=\"1.6\"/>\n";
    for (std::size_t i = 0; i < s.points.size(); ++i) {
      const auto& [x, y] = s.points[i];
      out += "<circle cx=\"" + num(px(x)) + "\" cy=\"" + num(py(y)) +
             "\" r=\"2.5\" fill=\"" + color + "\"/>\n";
      if (i < s.err.size() && s.err[i] > 0.0) {
        out += "<line x1=\"" + num(px(x)) + "\" y1=\"" + num(py(y - s.err[i])) +
               "\" x2=\"" + num(px(x)) + "\" y2=\"" + num(py(y + s.err[i])) +
               "\" stroke=\"" + color + "\"/>\n";
      }
    }
    out += "<text x=\"" + num(kWidth - kRight - 8) + "\" y=\"" +
           num(kTop + 16 + 16 * static_cast<double>(si)) +
           "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"12\" "
           "fill=\"" + color + "\">" + s.label + "</text>\n";
  }
  out += "</svg>\n";
  return out;
}

std::string roc_chart(const stats::RocCurve& curve, const std::string& title) {
  Series s;
  s.label = "ROC";
  for (const auto& pt : curve.points) s.points.emplace_back(pt.fpr, pt.tpr);
  ChartOptions opts;
  opts.title = title;
  opts.x_label = "false positive rate";
  opts.y_label = "true positive rate";
  opts.x_min = 0.0;
  opts.x_max = 1.0;
  opts.y_min = 0.0;
  opts.y_max = 1.0;
  opts.diagonal = true;
  return line_chart({s}, opts);
}

}  // namespace fundus::svg
