#include "fundus/sweeps.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "fundus/csv.hpp"
#include "fundus/error.hpp"

namespace fundus::sweep {

namespace {

std::pair<double, double> sens_spec_at(const stats::ScoredSet& set,
                                       double threshold) {
  std::size_t tp = 0, fn = 0, tn = 0, fp = 0;
  for (std::size_t i = 0; i < set.scores.size(); ++i) {
    const bool call_pos = set.scores[i] >= threshold;
    if (set.labels[i] == 1) (call_pos ? tp : fn) += 1;
    else (call_pos ? fp : tn) += 1;
  }
  const double sens = tp + fn ? static_cast<double>(tp) / (tp + fn) : 0.0;
  const double spec = tn + fp ? static_cast<double>(tn) / (tn + fp) : 0.0;
  return {sens, spec};
}

std::pair<double, double> fold_ci(std::pair<double, double> ci, double point) {
  return {std::min(ci.first, point), std::max(ci.second, point)};
}

}  // namespace

EvalReport evaluate_scores(const stats::ScoredSet& set, int resamples,
                           std::uint64_t seed,
                           std::optional<double> threshold) {
  set.validate_two_class();
  EvalReport r;
  r.n_pos = set.n_pos();
  r.n_neg = set.n_neg();
  r.auc = stats::auc(set);
  r.threshold = threshold ? *threshold : stats::operating_point(set).threshold;
  std::tie(r.sensitivity, r.specificity) = sens_spec_at(set, r.threshold);

  const double thr = r.threshold;
  r.auc_ci = fold_ci(
      stats::bootstrap_ci([](const stats::ScoredSet& s) { return stats::auc(s); },
                          set, resamples, seed),
      r.auc);
  r.sensitivity_ci = fold_ci(
      stats::bootstrap_ci(
          [thr](const stats::ScoredSet& s) { return sens_spec_at(s, thr).first; },
          set, resamples, seed + 1),
      r.sensitivity);
  r.specificity_ci = fold_ci(
      stats::bootstrap_ci(
          [thr](const stats::ScoredSet& s) { return sens_spec_at(s, thr).second; },
          set, resamples, seed + 2),
      r.specificity);
  return r;
}

std::string report_json(const EvalReport& r) {
  nlohmann::json j;
  j["auc"] = r.auc;
  j["auc_ci"] = {r.auc_ci.first, r.auc_ci.second};
  j["sensitivity"] = r.sensitivity;
  j["sensitivity_ci"] = {r.sensitivity_ci.first, r.sensitivity_ci.second};
  j["specificity"] = r.specificity;
  j["specificity_ci"] = {r.specificity_ci.first, r.specificity_ci.second};
  j["threshold"] = r.threshold;
  j["n_pos"] = r.n_pos;
  j["n_neg"] = r.n_neg;
  nlohmann::json cmp = nlohmann::json::array();
  for (const auto& c : r.comparisons)
    cmp.push_back({{"other", c.other_id},
                   {"auc_other", c.auc_other},
                   {"z", c.z},
                   {"p", c.p}});
  j["delong"] = cmp;
  return j.dump(2) + "\n";
}

namespace {

struct CellOutcome {
  double auc = 0.0, sens = 0.0, spec = 0.0;
  stats::ScoredSet test_scores;
};

CellOutcome run_cell(const CellContext& ctx, ft::InitKind init,
                     double fraction, std::uint64_t seed) {
  const ssl::Checkpoint* ckpt =
      init == ft::InitKind::contrastive_checkpoint ? ctx.checkpoint : nullptr;
  data::DatasetManifest pool =
      data::subsample_labeled(ctx.train, fraction, seed);
  pool.split_tags.clear();  // re-split the kept records below
  data::SplitFractions fr;
  fr.train = 1.0 - ctx.val_fraction;
  fr.val = ctx.val_fraction;
  fr.test = 0.0;
  const auto tagged = data::make_patient_splits(pool, fr, seed);

  ft::FinetuneConfig cfg = ctx.finetune;
  cfg.init = init;
  cfg.seed = seed;
  auto model = ft::build_classifier(init, ctx.encoder, seed, ckpt);
  const auto fit =
      ft::finetune(*model, tagged.subset(data::Split::train),
                   tagged.subset(data::Split::val), cfg, ctx.policy,
                   ctx.train_base_dir);

  const auto pred = ft::predict_proba(*model, ctx.test, ctx.test_base_dir);
  require(pred.failures.empty(),
          "sweep cell: " + std::to_string(pred.failures.size()) +
              " test images failed to load");
  CellOutcome out;
  for (std::size_t i = 0; i < ctx.test.records.size(); ++i) {
    out.test_scores.scores.push_back(pred.probs[i]);
    out.test_scores.labels.push_back(
        data::grade_to_referable(ctx.test.records[i].grade) ? 1 : 0);
  }
  out.auc = stats::auc(out.test_scores);
  std::tie(out.sens, out.spec) =
      sens_spec_at(out.test_scores, fit.operating_threshold);
  return out;
}

}  // namespace

std::vector<SweepRow> label_efficiency_sweep(const CellContext& ctx,
                                             const std::vector<double>& fractions,
                                             int seeds) {
  require_input(ctx.checkpoint != nullptr,
                "label sweep: contrastive checkpoint required");
  require_input(seeds >= 1, "label sweep: seeds must be >= 1");
  std::vector<double> fr = fractions;
  std::sort(fr.begin(), fr.end());

  std::vector<SweepRow> rows;
  for (const double f : fr) {
    for (const auto init : {ft::InitKind::contrastive_checkpoint,
                            ft::InitKind::random_baseline}) {
      for (int s = 0; s < seeds; ++s) {
        SweepRow row;
        row.fraction = f;
        row.init = ft::init_name(init);
        row.seed = ctx.finetune.seed + static_cast<std::uint64_t>(s);
        try {
          const CellOutcome out = run_cell(ctx, init, f, row.seed);
          row.auc = out.auc;
          row.sens = out.sens;
          row.spec = out.spec;
          row.status = "ok";
        } catch (const std::exception& e) {
          row.auc = row.sens = row.spec =
              std::numeric_limits<double>::quiet_NaN();
          row.status = std::string("failed: ") + e.what();
        }
        rows.push_back(row);
      }
    }
  }
  return rows;
}

std::vector<BatchRow> batch_size_sweep(const BatchContext& ctx,
                                       const std::vector<int>& sizes,
                                       int seeds) {
  require_input(!sizes.empty(), "batch sweep: sizes must be non-empty");
  const std::size_t n_unlabeled = ctx.unlabeled.records.size();
  for (const int s : sizes)
    require_input(s >= 2 && static_cast<std::size_t>(s) <= n_unlabeled,
                  "batch sweep: size " + std::to_string(s) +
                      " out of range [2, dataset size]");
  std::vector<int> sz = sizes;
  std::sort(sz.begin(), sz.end());

  std::vector<BatchRow> rows;
  for (const int size : sz) {
    for (int s = 0; s < seeds; ++s) {
      BatchRow row;
      row.batch = size;
      row.seed = ctx.pretrain.seed + static_cast<std::uint64_t>(s);
      try {
        ssl::PretrainConfig pt = ctx.pretrain;
        pt.batch_size = size;
        pt.seed = row.seed;
        const auto pre =
            ssl::pretrain(ctx.unlabeled, ctx.pretrain_policy, ctx.bank,
                          ctx.encoder, ctx.head, pt, ctx.unlabeled_base_dir);
        CellContext cell = ctx.cell;
        cell.checkpoint = &pre.checkpoint;
        const CellOutcome out = run_cell(
            cell, ft::InitKind::contrastive_checkpoint, 1.0, row.seed);
        row.auc = out.auc;
        row.sens = out.sens;
        row.spec = out.spec;
        row.status = "ok";
      } catch (const std::exception& e) {
        row.auc = row.sens = row.spec = std::numeric_limits<double>::quiet_NaN();
        row.status = std::string("failed: ") + e.what();
      }
      rows.push_back(row);
    }
  }
  return rows;
}

namespace {

template <typename Row, typename Key>
std::vector<SummaryRow> summarize(const std::vector<Row>& rows, Key key,
                                  const std::string Row::* init_member) {
  std::vector<SummaryRow> out;
  for (const auto& r : rows) {
    if (r.status != "ok") continue;
    const double k = key(r);
    const std::string init = init_member ? r.*init_member : "";
    auto it = std::find_if(out.begin(), out.end(), [&](const SummaryRow& s) {
      return s.key == k && s.init == init;
    });
    if (it == out.end()) {
      out.push_back({k, init, 0.0, 0.0, 0});
      it = out.end() - 1;
    }
    it->mean_auc += r.auc;
    it->sd_auc += r.auc * r.auc;
    it->n += 1;
  }
  for (auto& s : out) {
    s.mean_auc /= s.n;
    const double var = s.sd_auc / s.n - s.mean_auc * s.mean_auc;
    s.sd_auc = s.n > 1 ? std::sqrt(std::max(0.0, var) *
                                   (static_cast<double>(s.n) / (s.n - 1)))
                       : 0.0;
  }
  std::sort(out.begin(), out.end(), [](const SummaryRow& a, const SummaryRow& b) {
    return a.key != b.key ? a.key < b.key : a.init < b.init;
  });
  return out;
}

}  // namespace

std::vector<SummaryRow> summarize_label_sweep(const std::vector<SweepRow>& rows) {
  return summarize(rows, [](const SweepRow& r) { return r.fraction; },
                   &SweepRow::init);
}

std::vector<SummaryRow> summarize_batch_sweep(const std::vector<BatchRow>& rows) {
  return summarize(rows,
                   [](const BatchRow& r) { return static_cast<double>(r.batch); },
                   static_cast<const std::string BatchRow::*>(nullptr));
}

std::pair<int, int> batch_direction(const std::vector<SummaryRow>& summary) {
  int ups = 0, downs = 0;
  for (std::size_t i = 1; i < summary.size(); ++i) {
    if (summary[i].mean_auc > summary[i - 1].mean_auc) ++ups;
    else if (summary[i].mean_auc < summary[i - 1].mean_auc) ++downs;
  }
  return {ups, downs};
}

void write_sweep_csv(const std::string& path, const std::vector<SweepRow>& rows) {
  CsvTable table;
  table.header = {"fraction", "init", "seed", "auc", "sens", "spec"};
  for (const auto& r : rows)
    table.rows.push_back({format_double(r.fraction), r.init,
                          std::to_string(r.seed), format_double(r.auc),
                          format_double(r.sens), format_double(r.spec)});
  write_csv(path, table);
}

void write_batch_csv(const std::string& path, const std::vector<BatchRow>& rows) {
  CsvTable table;
  table.header = {"batch", "seed", "auc", "sens", "spec"};
  for (const auto& r : rows)
    table.rows.push_back({std::to_string(r.batch), std::to_string(r.seed),
                          format_double(r.auc), format_double(r.sens),
                          format_double(r.spec)});
  write_csv(path, table);
}

std::vector<AblationRow> nst_ablation(const CellContext& ctx,
                                      const ssl::Checkpoint& ckpt_nst,
                                      const ssl::Checkpoint& ckpt_plain,
                                      int seeds, double fraction) {
  require_input(seeds >= 1, "ablation: seeds must be >= 1");
  std::vector<AblationRow> rows;
  for (int s = 0; s < seeds; ++s) {
    AblationRow row;
    row.seed = ctx.finetune.seed + static_cast<std::uint64_t>(s);
    try {
      CellContext with_nst = ctx;
      with_nst.checkpoint = &ckpt_nst;
      const CellOutcome a = run_cell(
          with_nst, ft::InitKind::contrastive_checkpoint, fraction, row.seed);
      CellContext plain = ctx;
      plain.checkpoint = &ckpt_plain;
      const CellOutcome b = run_cell(
          plain, ft::InitKind::contrastive_checkpoint, fraction, row.seed);
      const auto dl = stats::delong_test(a.test_scores, b.test_scores);
      row.auc_nst = a.auc;
      row.auc_plain = b.auc;
      row.z = dl.z;
      row.p = dl.p;
      row.status = "ok";
    } catch (const std::exception& e) {
      row.auc_nst = row.auc_plain = row.z =
          std::numeric_limits<double>::quiet_NaN();
      row.p = std::numeric_limits<double>::quiet_NaN();
      row.status = std::string("failed: ") + e.what();
    }
    rows.push_back(row);
  }
  return rows;
}

void write_ablation_csv(const std::string& path,
                        const std::vector<AblationRow>& rows) {
  CsvTable table;
  table.header = {"seed", "auc_nst", "auc_plain", "delong_z", "delong_p"};
  for (const auto& r : rows)
    table.rows.push_back({std::to_string(r.seed), format_double(r.auc_nst),
                          format_double(r.auc_plain), format_double(r.z),
                          format_double(r.p)});
  write_csv(path, table);
}

}  // namespace fundus::sweep
