#include "fundus/finetune.hpp"

#include <algorithm>
#include <cmath>

#include "fundus/csv.hpp"
#include "fundus/dataset.hpp"
#include "fundus/error.hpp"
#include "fundus/image_io.hpp"
#include "fundus/pretrain.hpp"
#include "fundus/quality.hpp"
#include "fundus/rng.hpp"
#include "fundus/stats.hpp"

namespace fundus::ft {

InitKind parse_init(const std::string& s) {
  if (s == "cl" || s == "contrastive" || s == "contrastive_checkpoint")
    return InitKind::contrastive_checkpoint;
  if (s == "random" || s == "random_baseline") return InitKind::random_baseline;
  throw UsageError("unknown init kind: " + s + " (want cl or random)");
}

const char* init_name(InitKind k) {
  return k == InitKind::contrastive_checkpoint ? "cl" : "random";
}

void FinetuneConfig::validate() const {
  require_input(learning_rate >= 0.0, "finetune: learning_rate must be >= 0");
  require_input(batch_size >= 1, "finetune: batch_size must be >= 1");
  require_input(epochs >= 1, "finetune: epochs must be >= 1");
}

void GridConfig::validate() const {
  require_input(!lr_grid.empty() && !optimizer_grid.empty() && !batch_grid.empty(),
                "grid: all grids must be non-empty");
  require_input(folds >= 2, "grid: folds must be >= 2");
}

double cross_entropy(const std::vector<double>& p, int label) {
  require_input(p.size() == 2, "cross_entropy: need a 2-probability vector");
  require_input(label == 0 || label == 1, "cross_entropy: label must be 0/1");
  require_input(p[0] >= 0.0 && p[1] >= 0.0 &&
                    std::abs(p[0] + p[1] - 1.0) <= 1e-6,
                "cross_entropy: probabilities must be >= 0 and sum to 1");
  return -std::log(std::max(p[static_cast<std::size_t>(label)], 1e-12));
}

std::unique_ptr<nn::ClassifierNet> build_classifier(
    InitKind init, const nn::EncoderConfig& encoder_cfg, std::uint64_t seed,
    const ssl::Checkpoint* checkpoint) {
  encoder_cfg.validate();
  require_input((init == InitKind::contrastive_checkpoint) ==
                    (checkpoint != nullptr),
                "build_classifier: checkpoint required exactly when init=cl");
  auto model = std::make_unique<nn::ClassifierNet>(encoder_cfg);
  model->init(seed);
  if (init == InitKind::contrastive_checkpoint)
    ssl::restore_params(*checkpoint, model->registry(), model->params(),
                        "encoder.");
  return model;
}

namespace {

stats::ScoredSet score_manifest(const nn::ClassifierNet& model,
                                const ImageStore& store) {
  stats::ScoredSet set;
  const int in_size = model.encoder().config().input_size;
  for (std::size_t i = 0; i < store.size(); ++i) {
    Image img = store.get(i);
    if (img.height != in_size || img.width != in_size)
      img = ingest::resize(img, in_size, in_size);
    set.scores.push_back(model.predict_referable(image_to_chw(img)));
    set.labels.push_back(store.referable(i) ? 1 : 0);
  }
  return set;
}

}  // namespace

FinetuneResult finetune(nn::ClassifierNet& model,
                        const data::DatasetManifest& train,
                        const data::DatasetManifest& val,
                        const FinetuneConfig& cfg,
                        const aug::AugmentationPolicy& policy,
                        const std::string& base_dir) {
  cfg.validate();
  require_input(!train.records.empty() && !val.records.empty(),
                "finetune: train and val must be non-empty");
  require_input(policy.out_size == model.encoder().config().input_size,
                "finetune: augment out_size must match encoder input_size");

  // Style transfer is a pretraining augmentation; keep it off here.
  aug::AugmentationPolicy train_policy = policy;
  train_policy.p_nst = 0.0;
  aug::StyleBank empty_bank;

  ImageStore train_store(train, base_dir);
  ImageStore val_store(val, base_dir);

  bool has_pos = false, has_neg = false;
  for (std::size_t i = 0; i < train_store.size(); ++i)
    (train_store.referable(i) ? has_pos : has_neg) = true;
  require_input(has_pos && has_neg,
                "finetune: training split must contain both classes");

  nn::Optimizer opt;
  opt.kind = cfg.optimizer;
  opt.lr = cfg.learning_rate;

  const std::size_t n = train_store.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;

  const auto& reg = model.registry();
  std::vector<float> grad(reg.total);
  std::vector<std::vector<float>> chunk_grads(kReduceChunks);
  std::vector<float> best_theta = model.params();

  FinetuneResult result;
  double best_auc = -1.0;
  int best_epoch = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle_rng = Rng::stream(
        cfg.seed, "finetune/epoch/" + std::to_string(epoch) + "/shuffle");
    shuffle_rng.shuffle(order);

    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t stop = std::min(n, start + static_cast<std::size_t>(cfg.batch_size));
      const std::size_t batch_n = stop - start;
      const double weight = 1.0 / static_cast<double>(batch_n);

      std::fill(grad.begin(), grad.end(), 0.f);
      std::vector<double> losses(batch_n, 0.0);
      parallel_chunks(batch_n, cfg.jobs, [&](int chunk, std::size_t b, std::size_t e) {
        auto& cg = chunk_grads[static_cast<std::size_t>(chunk)];
        if (cg.size() != reg.total) cg.assign(reg.total, 0.f);
        for (std::size_t k = b; k < e; ++k) {
          const std::size_t idx = order[start + k];
          Rng rng = Rng::stream(cfg.seed, "finetune/epoch/" + std::to_string(epoch) +
                                              "/img/" + std::to_string(idx));
          const Image view =
              aug::apply_regular(train_store.get(idx), train_policy, rng);
          const int label = train_store.referable(idx) ? 1 : 0;
          losses[k] = model.train_example(image_to_chw(view), label, weight,
                                          cg.data(), cfg.freeze_encoder);
        }
      });
      for (auto& cg : chunk_grads) {
        if (cg.empty()) continue;
        for (std::size_t i = 0; i < reg.total; ++i) grad[i] += cg[i];
        std::fill(cg.begin(), cg.end(), 0.f);
      }
      double batch_loss = 0.0;
      for (const double l : losses) batch_loss += l;
      batch_loss /= static_cast<double>(batch_n);
      if (!std::isfinite(batch_loss))
        throw std::runtime_error("finetune: loss diverged at epoch " +
                                 std::to_string(epoch));
      epoch_loss += batch_loss * static_cast<double>(batch_n);

      opt.step(model.params(), grad);
    }
    epoch_loss /= static_cast<double>(n);
    result.history.train_loss.push_back(epoch_loss);

    const stats::ScoredSet val_set = score_manifest(model, val_store);
    const double val_auc = stats::auc(val_set);
    result.history.val_auc.push_back(val_auc);
    if (val_auc > best_auc) {
      best_auc = val_auc;
      best_epoch = epoch;
      best_theta = model.params();
    }
  }

  model.params() = best_theta;
  result.best_epoch = best_epoch;
  result.best_val_auc = best_auc;
  const stats::ScoredSet val_set = score_manifest(model, val_store);
  result.operating_threshold = stats::operating_point(val_set).threshold;
  return result;
}

Prediction predict_proba(const nn::ClassifierNet& model,
                         const data::DatasetManifest& manifest,
                         const std::string& base_dir) {
  Prediction out;
  const int in_size = model.encoder().config().input_size;
  for (const auto& r : manifest.records) {
    try {
      Image img = ingest::load_image(ingest::resolve_uri(base_dir, r.image_uri));
      if (img.height != in_size || img.width != in_size)
        img = ingest::resize(img, in_size, in_size);
      out.probs.push_back(model.predict_referable(image_to_chw(img)));
    } catch (const std::exception& e) {
      out.probs.push_back(std::numeric_limits<double>::quiet_NaN());
      out.failures.emplace_back(r.image_id, e.what());
    }
  }
  return out;
}

GridSearchResult hyperparameter_search(
    const data::DatasetManifest& labeled, const nn::EncoderConfig& encoder_cfg,
    InitKind init, const ssl::Checkpoint* checkpoint, const GridConfig& grid,
    const FinetuneConfig& base, const aug::AugmentationPolicy& policy,
    const std::string& base_dir) {
  grid.validate();
  const auto folds = data::kfold_split(labeled, grid.folds, base.seed);

  GridSearchResult result;
  bool found = false;
  for (const double lr : grid.lr_grid) {
    for (const auto opt : grid.optimizer_grid) {
      for (const int batch : grid.batch_grid) {
        double auc_sum = 0.0;
        bool point_ok = true;
        std::vector<CvRow> rows;
        for (int f = 0; f < grid.folds; ++f) {
          CvRow row;
          row.lr = lr;
          row.optimizer = opt;
          row.batch = batch;
          row.fold = f;
          try {
            FinetuneConfig cfg = base;
            cfg.learning_rate = lr;
            cfg.optimizer = opt;
            cfg.batch_size = batch;
            auto model = build_classifier(init, encoder_cfg, cfg.seed, checkpoint);
            const auto fit =
                finetune(*model, folds[static_cast<std::size_t>(f)].train,
                         folds[static_cast<std::size_t>(f)].val, cfg, policy,
                         base_dir);
            row.val_auc = fit.best_val_auc;
            row.status = "ok";
            auc_sum += fit.best_val_auc;
          } catch (const std::exception& e) {
            row.val_auc = std::numeric_limits<double>::quiet_NaN();
            row.status = std::string("failed: ") + e.what();
            point_ok = false;
          }
          rows.push_back(row);
        }
        for (const auto& r : rows) result.table.push_back(r);
        if (!point_ok) continue;
        const double mean_auc = auc_sum / static_cast<double>(grid.folds);
        // Argmax with deterministic tie-breaking: lower lr, adam before
        // sgd, then smaller batch.
        auto better = [&](double cand_auc, double cand_lr,
                          nn::OptimizerKind cand_opt, int cand_batch) {
          if (!found) return true;
          if (cand_auc != result.best_mean_auc)
            return cand_auc > result.best_mean_auc;
          if (cand_lr != result.best.learning_rate)
            return cand_lr < result.best.learning_rate;
          if (cand_opt != result.best.optimizer)
            return cand_opt == nn::OptimizerKind::adam;
          return cand_batch < result.best.batch_size;
        };
        if (better(mean_auc, lr, opt, batch)) {
          found = true;
          result.best_mean_auc = mean_auc;
          result.best = base;
          result.best.learning_rate = lr;
          result.best.optimizer = opt;
          result.best.batch_size = batch;
        }
      }
    }
  }
  require_input(found, "hyperparameter_search: every grid point failed");
  return result;
}

void write_cv_table(const std::string& path, const std::vector<CvRow>& rows) {
  CsvTable table;
  table.header = {"lr", "optimizer", "batch", "fold", "val_auc", "status"};
  for (const auto& r : rows)
    table.rows.push_back({format_double(r.lr), nn::optimizer_name(r.optimizer),
                          std::to_string(r.batch), std::to_string(r.fold),
                          format_double(r.val_auc), r.status});
  write_csv(path, table);
}

}  // namespace fundus::ft
