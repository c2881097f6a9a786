#include "fundus/stats.hpp"

#include <algorithm>
#include <cmath>

#include "fundus/csv.hpp"
#include "fundus/error.hpp"
#include "fundus/rng.hpp"

namespace fundus::stats {

std::size_t ScoredSet::n_pos() const {
  std::size_t n = 0;
  for (const int l : labels) n += (l == 1);
  return n;
}

std::size_t ScoredSet::n_neg() const { return labels.size() - n_pos(); }

void ScoredSet::validate_two_class() const {
  require_input(scores.size() == labels.size() && !scores.empty(),
                "scored set: scores/labels length mismatch");
  for (const int l : labels)
    require_input(l == 0 || l == 1, "scored set: labels must be 0/1");
  for (const double s : scores)
    require_input(std::isfinite(s), "scored set: non-finite score");
  require_input(n_pos() > 0 && n_neg() > 0,
                "scored set: both classes must be present");
}

namespace {

// Distinct scores in descending order with per-score class counts.
struct ScoreGroups {
  std::vector<double> value;
  std::vector<std::size_t> pos, neg;
};

ScoreGroups group_scores(const ScoredSet& set) {
  std::vector<std::size_t> idx(set.scores.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return set.scores[a] > set.scores[b];
  });
  ScoreGroups g;
  for (const std::size_t i : idx) {
    if (g.value.empty() || set.scores[i] != g.value.back()) {
      g.value.push_back(set.scores[i]);
      g.pos.push_back(0);
      g.neg.push_back(0);
    }
    if (set.labels[i] == 1) ++g.pos.back();
    else ++g.neg.back();
  }
  return g;
}

}  // namespace

RocCurve roc_points(const ScoredSet& set) {
  set.validate_two_class();
  const ScoreGroups g = group_scores(set);
  const double np = static_cast<double>(set.n_pos());
  const double nn = static_cast<double>(set.n_neg());

  RocCurve curve;
  curve.points.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < g.value.size(); ++i) {
    tp += g.pos[i];
    fp += g.neg[i];
    curve.points.push_back({g.value[i], static_cast<double>(fp) / nn,
                            static_cast<double>(tp) / np});
  }
  return curve;
}

std::pair<std::uint64_t, std::uint64_t> auc_exact(const ScoredSet& set) {
  set.validate_two_class();
  const ScoreGroups g = group_scores(set);
  // Groups are sorted descending; walk from the low end so `below` counts
  // negatives with strictly smaller score than the current group.
  std::uint64_t wins = 0, ties = 0, below = 0;
  for (std::size_t i = g.value.size(); i-- > 0;) {
    ties += static_cast<std::uint64_t>(g.pos[i]) * g.neg[i];
    wins += static_cast<std::uint64_t>(g.pos[i]) * below;
    below += g.neg[i];
  }
  return {2 * wins + ties,
          2 * static_cast<std::uint64_t>(set.n_pos()) * set.n_neg()};
}

double auc(const ScoredSet& set) {
  const auto [num, den] = auc_exact(set);
  return static_cast<double>(num) / static_cast<double>(den);
}

double trapezoid_area(const RocCurve& curve) {
  double area = 0.0;
  for (std::size_t i = 1; i < curve.points.size(); ++i) {
    const auto& a = curve.points[i - 1];
    const auto& b = curve.points[i];
    area += (b.fpr - a.fpr) * (a.tpr + b.tpr) / 2.0;
  }
  return area;
}

OperatingPoint operating_point(const ScoredSet& set) {
  const RocCurve curve = roc_points(set);
  OperatingPoint best;
  double best_j = -2.0;
  for (const auto& pt : curve.points) {
    const double j = pt.tpr + (1.0 - pt.fpr) - 1.0;
    if (j >= best_j) {  // scan runs toward lower thresholds; ties go low
      best_j = j;
      best = {pt.threshold, pt.tpr, 1.0 - pt.fpr};
    }
  }
  return best;
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

DelongResult delong_test(const ScoredSet& a, const ScoredSet& b) {
  a.validate_two_class();
  b.validate_two_class();
  require_input(a.labels == b.labels,
                "delong_test: label vectors must be identical");

  const std::size_t m = a.n_pos(), n = a.n_neg();
  std::vector<std::size_t> pos_idx, neg_idx;
  for (std::size_t i = 0; i < a.labels.size(); ++i)
    (a.labels[i] == 1 ? pos_idx : neg_idx).push_back(i);

  // Structural components: v10[i] = mean_j psi(pos_i, neg_j) and v01[j] =
  // mean_i psi(pos_i, neg_j), psi in {0, 1/2, 1}.
  auto components = [&](const ScoredSet& s, std::vector<double>& v10,
                        std::vector<double>& v01) {
    v10.assign(m, 0.0);
    v01.assign(n, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
      const double sp = s.scores[pos_idx[i]];
      for (std::size_t j = 0; j < n; ++j) {
        const double sn = s.scores[neg_idx[j]];
        const double psi = sp > sn ? 1.0 : (sp == sn ? 0.5 : 0.0);
        v10[i] += psi;
        v01[j] += psi;
      }
    }
    for (auto& v : v10) v /= static_cast<double>(n);
    for (auto& v : v01) v /= static_cast<double>(m);
  };
  std::vector<double> a10, a01, b10, b01;
  components(a, a10, a01);
  components(b, b10, b01);

  auto mean = [](const std::vector<double>& v) {
    double s = 0.0;
    for (const double x : v) s += x;
    return s / static_cast<double>(v.size());
  };
  const double auc_a = mean(a10), auc_b = mean(b10);

  auto cov = [](const std::vector<double>& x, const std::vector<double>& y,
                double mx, double my) {
    if (x.size() < 2) return 0.0;
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += (x[i] - mx) * (y[i] - my);
    return s / static_cast<double>(x.size() - 1);
  };
  const double s10_aa = cov(a10, a10, auc_a, auc_a);
  const double s10_bb = cov(b10, b10, auc_b, auc_b);
  const double s10_ab = cov(a10, b10, auc_a, auc_b);
  const double s01_aa = cov(a01, a01, auc_a, auc_a);
  const double s01_bb = cov(b01, b01, auc_b, auc_b);
  const double s01_ab = cov(a01, b01, auc_a, auc_b);

  DelongResult r;
  r.auc_a = auc_a;
  r.auc_b = auc_b;
  r.var = (s10_aa + s10_bb - 2.0 * s10_ab) / static_cast<double>(m) +
          (s01_aa + s01_bb - 2.0 * s01_ab) / static_cast<double>(n);
  if (r.var < 1e-12) {
    r.z = 0.0;
    r.p = 1.0;
    return r;
  }
  r.z = (auc_a - auc_b) / std::sqrt(r.var);
  r.p = std::erfc(std::abs(r.z) / std::sqrt(2.0));
  return r;
}

std::pair<double, double> bootstrap_ci(const Metric& metric,
                                       const ScoredSet& set, int resamples,
                                       std::uint64_t seed) {
  require_input(resamples >= 100, "bootstrap_ci: need at least 100 resamples");
  set.validate_two_class();
  const std::size_t n = set.scores.size();
  Rng rng = Rng::stream(seed, "bootstrap");

  std::vector<double> values;
  values.reserve(static_cast<std::size_t>(resamples));
  int skipped = 0;
  ScoredSet sample;
  sample.scores.resize(n);
  sample.labels.resize(n);
  for (int b = 0; b < resamples; ++b) {
    bool ok = false;
    for (int attempt = 0; attempt < 100 && !ok; ++attempt) {
      bool has_pos = false, has_neg = false;
      for (std::size_t i = 0; i < n; ++i) {
        const auto j = static_cast<std::size_t>(
            rng.uniform_int(0, static_cast<std::int64_t>(n) - 1));
        sample.scores[i] = set.scores[j];
        sample.labels[i] = set.labels[j];
        (set.labels[j] == 1 ? has_pos : has_neg) = true;
      }
      ok = has_pos && has_neg;
    }
    if (!ok) {
      ++skipped;
      continue;
    }
    values.push_back(metric(sample));
  }
  require(skipped <= resamples / 10,
          "bootstrap_ci: metric undefined on more than 10% of resamples");
  std::sort(values.begin(), values.end());
  auto quantile = [&](double q) {
    const double h = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(h);
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    const double frac = h - static_cast<double>(lo);
    return values[lo] + frac * (values[hi] - values[lo]);
  };
  return {quantile(0.025), quantile(0.975)};
}

void write_roc_csv(const std::string& path, const RocCurve& curve) {
  CsvTable table;
  table.header = {"threshold", "fpr", "tpr"};
  for (const auto& pt : curve.points)
    table.rows.push_back({format_double(pt.threshold), format_double(pt.fpr),
                          format_double(pt.tpr)});
  write_csv(path, table);
}

}  // namespace fundus::stats
