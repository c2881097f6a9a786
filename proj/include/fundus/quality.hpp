#pragma once

#include <string>
#include <vector>

#include "fundus/image.hpp"
#include "fundus/manifest.hpp"

namespace fundus::ingest {

// Bilinear resize with corners aligned to pixel centers: output corner
// pixels sample input corner pixels exactly.
Image resize(const Image& img, int out_h, int out_w);

// Rec.601 luma, 0.299 R + 0.587 G + 0.114 B, as doubles.
std::vector<double> luminance(const Image& img);

struct QualityMetrics {
  double mean_luminance = 0.0;
  // Population variance of the 3x3 Laplacian (0,1,0 / 1,-4,1 / 0,1,0)
  // response over interior luminance pixels; 0 when no interior exists.
  double sharpness = 0.0;
  // Share of channel values saturated at exactly 0 or 1.
  double clipped_fraction = 0.0;
};

QualityMetrics quality_metrics(const Image& img);

struct QualityThresholds {
  double min_luminance = 0.05;
  double min_sharpness = 1e-4;
  double max_clipped = 0.6;
};

struct ExclusionReason {
  std::string image_id;
  std::string reason;  // "luminance", "sharpness", "clipped", or "io"
};

struct FilterResult {
  data::DatasetManifest kept;
  data::DatasetManifest excluded;
  std::vector<ExclusionReason> reasons;
};

// Loads each record's image and excludes it when a threshold is violated;
// records that fail to load are excluded with reason "io". `base_dir`
// resolves relative image URIs (usually the manifest's directory).
FilterResult filter_quality(const data::DatasetManifest& manifest,
                            const QualityThresholds& thresholds,
                            const std::string& base_dir = "");

void write_exclusion_report(const std::string& path,
                            const std::vector<ExclusionReason>& reasons);

// Joins `uri` onto `base_dir` unless the uri is absolute or base is empty.
std::string resolve_uri(const std::string& base_dir, const std::string& uri);

}  // namespace fundus::ingest
