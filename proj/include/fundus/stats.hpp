#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace fundus::stats {

struct ScoredSet {
  std::vector<double> scores;
  std::vector<int> labels;  // 0/1, aligned with scores

  std::size_t n_pos() const;
  std::size_t n_neg() const;
  // Throws unless sizes match and both classes are present.
  void validate_two_class() const;
};

struct RocPoint {
  double threshold = 0.0;  // classify positive when score >= threshold
  double fpr = 0.0;
  double tpr = 0.0;
};

// Points sorted by descending threshold, one per distinct score, with a
// leading (+inf, 0, 0) sentinel; the final point is (min score, 1, 1).
struct RocCurve {
  std::vector<RocPoint> points;
};

RocCurve roc_points(const ScoredSet& set);

// Probability a random positive outscores a random negative, ties counted
// half. Returned as an exact rational (2*wins + ties) / (2 * n_pos * n_neg).
std::pair<std::uint64_t, std::uint64_t> auc_exact(const ScoredSet& set);
double auc(const ScoredSet& set);
double trapezoid_area(const RocCurve& curve);

struct OperatingPoint {
  double threshold = 0.0;
  double sensitivity = 0.0;
  double specificity = 0.0;
};

// Maximizes sensitivity + specificity - 1; ties resolve to the lower
// threshold (higher sensitivity).
OperatingPoint operating_point(const ScoredSet& set);

struct DelongResult {
  double auc_a = 0.0;
  double auc_b = 0.0;
  double var = 0.0;
  double z = 0.0;
  double p = 1.0;
};

// Paired comparison of two score vectors over the same labels via the
// structural-components covariance estimate; two-sided normal p-value.
// Degenerate variance (< 1e-12) reports z = 0, p = 1.
DelongResult delong_test(const ScoredSet& a, const ScoredSet& b);

double normal_cdf(double x);

using Metric = std::function<double(const ScoredSet&)>;

// Percentile interval [2.5%, 97.5%] over B index resamples with
// replacement. Single-class resamples are redrawn (up to 100 retries each)
// and skipped after that; more than 10% skipped is an error.
std::pair<double, double> bootstrap_ci(const Metric& metric,
                                       const ScoredSet& set, int resamples,
                                       std::uint64_t seed);

void write_roc_csv(const std::string& path, const RocCurve& curve);

}  // namespace fundus::stats
