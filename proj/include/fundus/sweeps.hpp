#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fundus/augment.hpp"
#include "fundus/checkpoint.hpp"
#include "fundus/finetune.hpp"
#include "fundus/manifest.hpp"
#include "fundus/pretrain.hpp"
#include "fundus/stats.hpp"

namespace fundus::sweep {

struct EvalReport {
  double auc = 0.0;
  std::pair<double, double> auc_ci{0.0, 0.0};
  double sensitivity = 0.0;
  std::pair<double, double> sensitivity_ci{0.0, 0.0};
  double specificity = 0.0;
  std::pair<double, double> specificity_ci{0.0, 0.0};
  double threshold = 0.5;
  std::size_t n_pos = 0, n_neg = 0;

  struct Comparison {
    std::string other_id;
    double auc_other = 0.0;
    double z = 0.0;
    double p = 1.0;
  };
  std::vector<Comparison> comparisons;
};

// AUC with percentile-bootstrap CI plus sensitivity/specificity (and CIs)
// at `threshold` (defaults to Youden's J on this set). CI bounds are folded
// around the point estimate so they always bracket it.
EvalReport evaluate_scores(const stats::ScoredSet& set, int resamples,
                           std::uint64_t seed,
                           std::optional<double> threshold = std::nullopt);

std::string report_json(const EvalReport& report);

// Shared fixture for fine-tune-and-eval cells.
struct CellContext {
  data::DatasetManifest train;  // labeled pool, tags default to train
  data::DatasetManifest test;
  std::string train_base_dir, test_base_dir;
  nn::EncoderConfig encoder;
  const ssl::Checkpoint* checkpoint = nullptr;  // required for cl cells
  ft::FinetuneConfig finetune;                  // seed overridden per cell
  aug::AugmentationPolicy policy;
  double val_fraction = 0.15;
};

struct SweepRow {
  double fraction = 1.0;
  std::string init;
  std::uint64_t seed = 0;
  double auc = 0.0, sens = 0.0, spec = 0.0;
  std::string status;  // "ok" or "failed: ..."
};

// One fine-tune + test evaluation per (fraction, init, seed): subsamples
// the labeled pool, carves a patient-level validation split, trains, and
// scores the fixed test set. Failures are flagged per cell.
std::vector<SweepRow> label_efficiency_sweep(const CellContext& ctx,
                                             const std::vector<double>& fractions,
                                             int seeds);

struct BatchContext {
  data::DatasetManifest unlabeled;
  std::string unlabeled_base_dir;
  aug::AugmentationPolicy pretrain_policy;
  aug::StyleBank bank;
  nn::EncoderConfig encoder;
  nn::ProjectionHeadConfig head;
  ssl::PretrainConfig pretrain;  // batch_size/seed overridden per cell
  CellContext cell;              // checkpoint filled per cell
};

struct BatchRow {
  int batch = 0;
  std::uint64_t seed = 0;
  double auc = 0.0, sens = 0.0, spec = 0.0;
  std::string status;
};

std::vector<BatchRow> batch_size_sweep(const BatchContext& ctx,
                                       const std::vector<int>& sizes,
                                       int seeds);

struct SummaryRow {
  double key = 0.0;  // fraction or batch size
  std::string init;
  double mean_auc = 0.0, sd_auc = 0.0;
  int n = 0;
};

std::vector<SummaryRow> summarize_label_sweep(const std::vector<SweepRow>& rows);
std::vector<SummaryRow> summarize_batch_sweep(const std::vector<BatchRow>& rows);
// Adjacent-step direction over mean AUC: (ups, downs).
std::pair<int, int> batch_direction(const std::vector<SummaryRow>& summary);

void write_sweep_csv(const std::string& path, const std::vector<SweepRow>& rows);
void write_batch_csv(const std::string& path, const std::vector<BatchRow>& rows);

// Style-transfer ablation: per seed, fine-tunes from two checkpoints and
// compares the paired test AUCs.
struct AblationRow {
  std::uint64_t seed = 0;
  double auc_nst = 0.0, auc_plain = 0.0;
  double z = 0.0, p = 1.0;
  std::string status;
};

std::vector<AblationRow> nst_ablation(const CellContext& ctx,
                                      const ssl::Checkpoint& ckpt_nst,
                                      const ssl::Checkpoint& ckpt_plain,
                                      int seeds, double fraction = 1.0);

void write_ablation_csv(const std::string& path,
                        const std::vector<AblationRow>& rows);

}  // namespace fundus::sweep
