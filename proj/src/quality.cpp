#include "fundus/quality.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "fundus/csv.hpp"
#include "fundus/error.hpp"
#include "fundus/image_io.hpp"

namespace fundus::ingest {

Image resize(const Image& img, int out_h, int out_w) {
  require_input(out_h >= 1 && out_w >= 1, "resize: degenerate target size");
  require(img.height > 0 && img.width > 0, "resize: empty input");
  if (out_h == img.height && out_w == img.width) return img;

  Image out(out_h, out_w);
  const double sy = out_h > 1
                        ? static_cast<double>(img.height - 1) / (out_h - 1)
                        : 0.0;
  const double sx = out_w > 1
                        ? static_cast<double>(img.width - 1) / (out_w - 1)
                        : 0.0;
  for (int y = 0; y < out_h; ++y) {
    const double fy = y * sy;
    int y0 = static_cast<int>(fy);
    y0 = std::min(y0, img.height - 1);
    const int y1 = std::min(y0 + 1, img.height - 1);
    const float wy = static_cast<float>(fy - y0);
    for (int x = 0; x < out_w; ++x) {
      const double fx = x * sx;
      int x0 = static_cast<int>(fx);
      x0 = std::min(x0, img.width - 1);
      const int x1 = std::min(x0 + 1, img.width - 1);
      const float wx = static_cast<float>(fx - x0);
      for (int c = 0; c < 3; ++c) {
        const float top = img.at(y0, x0, c) * (1.f - wx) + img.at(y0, x1, c) * wx;
        const float bot = img.at(y1, x0, c) * (1.f - wx) + img.at(y1, x1, c) * wx;
        float v = top * (1.f - wy) + bot * wy;
        v = v < 0.f ? 0.f : (v > 1.f ? 1.f : v);
        out.at(y, x, c) = v;
      }
    }
  }
  return out;
}

std::vector<double> luminance(const Image& img) {
  std::vector<double> lum(img.pixel_count());
  for (std::size_t i = 0; i < lum.size(); ++i) {
    const float* px = img.data.data() + i * 3;
    lum[i] = 0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2];
  }
  return lum;
}

QualityMetrics quality_metrics(const Image& img) {
  require(img.height > 0 && img.width > 0, "quality_metrics: empty image");
  const auto lum = luminance(img);

  QualityMetrics q;
  double sum = 0.0;
  for (const double v : lum) sum += v;
  q.mean_luminance = sum / static_cast<double>(lum.size());

  std::size_t clipped = 0;
  for (const float v : img.data)
    if (v <= 0.f || v >= 1.f) ++clipped;
  q.clipped_fraction = static_cast<double>(clipped) /
                       static_cast<double>(img.data.size());

  const int h = img.height, w = img.width;
  if (h >= 3 && w >= 3) {
    double rsum = 0.0, rsq = 0.0;
    const std::size_t count = static_cast<std::size_t>(h - 2) * (w - 2);
    for (int y = 1; y < h - 1; ++y) {
      for (int x = 1; x < w - 1; ++x) {
        const double r = lum[static_cast<std::size_t>(y - 1) * w + x] +
                         lum[static_cast<std::size_t>(y + 1) * w + x] +
                         lum[static_cast<std::size_t>(y) * w + x - 1] +
                         lum[static_cast<std::size_t>(y) * w + x + 1] -
                         4.0 * lum[static_cast<std::size_t>(y) * w + x];
        rsum += r;
        rsq += r * r;
      }
    }
    const double mean = rsum / static_cast<double>(count);
    q.sharpness = std::max(0.0, rsq / static_cast<double>(count) - mean * mean);
  }
  return q;
}

std::string resolve_uri(const std::string& base_dir, const std::string& uri) {
  if (base_dir.empty()) return uri;
  const std::filesystem::path p(uri);
  if (p.is_absolute()) return uri;
  return (std::filesystem::path(base_dir) / p).string();
}

FilterResult filter_quality(const data::DatasetManifest& manifest,
                            const QualityThresholds& thresholds,
                            const std::string& base_dir) {
  require_input(std::isfinite(thresholds.min_luminance) &&
                    std::isfinite(thresholds.min_sharpness) &&
                    std::isfinite(thresholds.max_clipped),
                "filter_quality: thresholds must be finite");
  FilterResult result;
  for (const auto& r : manifest.records) {
    std::string reason;
    try {
      const Image img = load_image(resolve_uri(base_dir, r.image_uri));
      const QualityMetrics q = quality_metrics(img);
      if (q.mean_luminance < thresholds.min_luminance) reason = "luminance";
      else if (q.sharpness < thresholds.min_sharpness) reason = "sharpness";
      else if (q.clipped_fraction > thresholds.max_clipped) reason = "clipped";
    } catch (const std::exception&) {
      reason = "io";
    }
    if (reason.empty()) {
      result.kept.records.push_back(r);
    } else {
      result.excluded.records.push_back(r);
      result.excluded.split_tags[r.image_id] = data::Split::excluded;
      result.reasons.push_back({r.image_id, reason});
    }
  }
  return result;
}

void write_exclusion_report(const std::string& path,
                            const std::vector<ExclusionReason>& reasons) {
  CsvTable table;
  table.header = {"image_id", "reason"};
  for (const auto& r : reasons) table.rows.push_back({r.image_id, r.reason});
  write_csv(path, table);
}

}  // namespace fundus::ingest
