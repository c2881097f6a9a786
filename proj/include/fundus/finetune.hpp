#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "fundus/augment.hpp"
#include "fundus/checkpoint.hpp"
#include "fundus/manifest.hpp"
#include "fundus/model.hpp"

namespace fundus::ft {

enum class InitKind { contrastive_checkpoint, random_baseline };
InitKind parse_init(const std::string& s);
const char* init_name(InitKind k);

struct FinetuneConfig {
  InitKind init = InitKind::contrastive_checkpoint;
  double learning_rate = 1e-3;
  nn::OptimizerKind optimizer = nn::OptimizerKind::adam;
  int batch_size = 32;
  int epochs = 30;
  bool freeze_encoder = false;
  std::uint64_t seed = 0;
  int jobs = 1;
  void validate() const;
};

struct GridConfig {
  std::vector<double> lr_grid = {1e-6, 1e-5, 1e-4, 1e-3, 1e-2};
  std::vector<nn::OptimizerKind> optimizer_grid = {nn::OptimizerKind::adam,
                                                   nn::OptimizerKind::sgd};
  std::vector<int> batch_grid = {32, 64, 128, 256};
  int folds = 5;
  void validate() const;
};

// -log p[label] with p clamped below at 1e-12; `p` must be a 2-probability
// vector summing to 1.
double cross_entropy(const std::vector<double>& p, int label);

// Contrastive init copies encoder tensors from the checkpoint (projection
// head discarded); the baseline initializes everything from `seed`. The
// classification head is always freshly initialized.
std::unique_ptr<nn::ClassifierNet> build_classifier(
    InitKind init, const nn::EncoderConfig& encoder_cfg, std::uint64_t seed,
    const ssl::Checkpoint* checkpoint = nullptr);

struct FinetuneHistory {
  std::vector<double> train_loss;  // per epoch
  std::vector<double> val_auc;     // per epoch
};

struct FinetuneResult {
  FinetuneHistory history;
  int best_epoch = 0;
  double best_val_auc = 0.0;
  double operating_threshold = 0.5;  // Youden's J on validation at best epoch
};

// Supervised training with the regular augmentation policy (style transfer
// stays off here); returns the weights from the epoch with the best
// validation AUC.
FinetuneResult finetune(nn::ClassifierNet& model,
                        const data::DatasetManifest& train,
                        const data::DatasetManifest& val,
                        const FinetuneConfig& cfg,
                        const aug::AugmentationPolicy& policy,
                        const std::string& base_dir = "");

struct Prediction {
  std::vector<double> probs;  // referable probability; NaN on failure
  std::vector<std::pair<std::string, std::string>> failures;  // id, reason
};

// Deterministic per-image referable probabilities in manifest order (no
// test-time augmentation); images are resized to the encoder input size.
Prediction predict_proba(const nn::ClassifierNet& model,
                         const data::DatasetManifest& manifest,
                         const std::string& base_dir = "");

struct CvRow {
  double lr = 0.0;
  nn::OptimizerKind optimizer = nn::OptimizerKind::adam;
  int batch = 0;
  int fold = 0;
  double val_auc = 0.0;
  std::string status;  // "ok" or "failed: <why>"
};

struct GridSearchResult {
  FinetuneConfig best;
  double best_mean_auc = 0.0;
  std::vector<CvRow> table;
};

// Mean validation AUC over patient-level folds for every grid point; the
// argmax wins, ties broken by lower lr, then adam before sgd, then smaller
// batch. A grid point with any failed fold is out of the running.
GridSearchResult hyperparameter_search(
    const data::DatasetManifest& labeled, const nn::EncoderConfig& encoder_cfg,
    InitKind init, const ssl::Checkpoint* checkpoint, const GridConfig& grid,
    const FinetuneConfig& base, const aug::AugmentationPolicy& policy,
    const std::string& base_dir = "");

void write_cv_table(const std::string& path, const std::vector<CvRow>& rows);

}  // namespace fundus::ft
