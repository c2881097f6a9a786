// fundus-cl: contrastive pretraining and referable-DR evaluation pipeline.
//
// Subcommands: synth, ingest, pretrain, finetune, eval, sweep,
// style-preview. Every run is reproducible from (config, seed); outputs are
// plain CSV/JSON/SVG/PNG with no timestamps inside.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "fundus/config.hpp"
#include "fundus/csv.hpp"
#include "fundus/dataset.hpp"
#include "fundus/error.hpp"
#include "fundus/image_io.hpp"
#include "fundus/manifest.hpp"
#include "fundus/quality.hpp"
#include "fundus/stats.hpp"
#include "fundus/svg.hpp"
#include "fundus/sweeps.hpp"
#include "fundus/synth.hpp"

namespace fs = std::filesystem;
using namespace fundus;

namespace {

// ---- logging -------------------------------------------------------------

int log_level() {  // 0 error, 1 warn, 2 info, 3 debug
  static const int level = [] {
    const char* env = std::getenv("FUNDUS_CL_LOG");
    if (!env) return 2;
    const std::string v = env;
    if (v == "error") return 0;
    if (v == "warn") return 1;
    if (v == "debug") return 3;
    return 2;
  }();
  return level;
}

void log_info(const std::string& msg) {
  if (log_level() >= 2) std::cerr << "[info] " << msg << "\n";
}

void log_warn(const std::string& msg) {
  if (log_level() >= 1) std::cerr << "[warn] " << msg << "\n";
}

// ---- run records -----------------------------------------------------------

std::string utc_stamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y%m%dT%H%M%SZ", &tm);
  return buf;
}

// Creates the run directory (default runs/<stamp>-<digest>) and drops the
// resolved config into it. Nothing inside the directory carries time.
std::string open_run_dir(const cfg::RunConfig& config,
                         const std::string& out_flag) {
  const std::string digest = config.digest();
  std::string dir = out_flag;
  if (dir.empty()) dir = "runs/" + utc_stamp() + "-" + digest.substr(0, 12);
  fs::create_directories(dir);
  write_text_file((fs::path(dir) / "resolved.toml").string(),
                  config.canonical_toml());
  log_info("run " + digest.substr(0, 12) + " -> " + dir);
  return dir;
}

cfg::RunConfig load_config(const std::string& config_path,
                           std::optional<std::uint64_t> seed_flag,
                           std::optional<int> jobs_flag) {
  cfg::RunConfig config = config_path.empty()
                              ? cfg::RunConfig::defaults()
                              : cfg::RunConfig::load(config_path);
  if (seed_flag) config.seed = *seed_flag;
  if (jobs_flag) config.jobs = *jobs_flag;
  // One root seed feeds every stage.
  config.pretrain.train.seed = config.seed;
  config.pretrain.train.jobs = config.jobs;
  config.finetune.train.seed = config.seed;
  config.finetune.train.jobs = config.jobs;
  return config;
}

std::string require_path(const std::string& flag_value,
                         const std::string& config_value,
                         const std::string& what) {
  if (!flag_value.empty()) return flag_value;
  if (!config_value.empty()) return config_value;
  throw UsageError("missing " + what + " (set it in the config or pass a flag)");
}

data::DatasetManifest load_manifest_checked(const std::string& path) {
  auto m = data::read_manifest_csv(path);
  require_input(!m.records.empty(), "manifest is empty: " + path);
  return m;
}

std::string manifest_dir(const std::string& path) {
  return fs::path(path).parent_path().string();
}

aug::StyleBank load_bank_if_needed(const cfg::RunConfig& config) {
  if (config.augment.policy.p_nst <= 0.0) return {};
  require_input(!config.augment.style_dir.empty(),
                "augment.style_dir required when p_nst > 0");
  return aug::load_style_bank(config.augment.style_dir);
}

stats::ScoredSet scores_from_prediction(const data::DatasetManifest& manifest,
                                        const ft::Prediction& pred) {
  stats::ScoredSet set;
  for (std::size_t i = 0; i < manifest.records.size(); ++i) {
    if (!std::isfinite(pred.probs[i])) continue;
    set.scores.push_back(pred.probs[i]);
    set.labels.push_back(
        data::grade_to_referable(manifest.records[i].grade) ? 1 : 0);
  }
  return set;
}

void write_scores_csv(const std::string& path,
                      const data::DatasetManifest& manifest,
                      const ft::Prediction& pred) {
  CsvTable t;
  t.header = {"image_id", "label", "score"};
  for (std::size_t i = 0; i < manifest.records.size(); ++i) {
    if (!std::isfinite(pred.probs[i])) continue;
    t.rows.push_back({manifest.records[i].image_id,
                      data::grade_to_referable(manifest.records[i].grade)
                          ? "1"
                          : "0",
                      format_double(pred.probs[i])});
  }
  write_csv(path, t);
}

// ---- classifier checkpoint helpers ----------------------------------------

void save_classifier(const nn::ClassifierNet& model, const std::string& path,
                     const cfg::RunConfig& config, double threshold,
                     const std::string& init, int epoch, double loss) {
  ssl::Checkpoint ckpt = ssl::snapshot_params(model.registry(), model.params());
  ckpt.config_digest = config.digest();
  ckpt.epoch = epoch;
  ckpt.final_loss = loss;
  ckpt.seed = config.seed;
  nlohmann::json extra;
  extra["encoder"] =
      nlohmann::json::parse(ssl::encoder_config_json(model.encoder().config()));
  extra["operating_threshold"] = threshold;
  extra["init"] = init;
  ckpt.extra_json = extra.dump();
  ssl::save_checkpoint(ckpt, path);
}

struct LoadedClassifier {
  std::unique_ptr<nn::ClassifierNet> model;
  double threshold = 0.5;
  bool has_threshold = false;
};

LoadedClassifier load_classifier(const std::string& path) {
  const auto ckpt = ssl::load_checkpoint(path);
  const auto extra = nlohmann::json::parse(ckpt.extra_json);
  require_input(extra.contains("encoder"),
                "model checkpoint missing encoder config: " + path);
  const auto enc_cfg = ssl::encoder_config_from_json(extra["encoder"].dump());
  LoadedClassifier out;
  out.model = std::make_unique<nn::ClassifierNet>(enc_cfg);
  ssl::restore_params(ckpt, out.model->registry(), out.model->params(), "");
  if (extra.contains("operating_threshold")) {
    out.threshold = extra["operating_threshold"].get<double>();
    out.has_threshold = true;
  }
  return out;
}

// ---- shared finetune flow ---------------------------------------------------

struct FinetuneArtifacts {
  std::unique_ptr<nn::ClassifierNet> model;
  ft::FinetuneResult fit;
  std::vector<ft::CvRow> cv_rows;
  ft::FinetuneConfig chosen;
};

FinetuneArtifacts run_finetune_flow(const cfg::RunConfig& config,
                                    ft::InitKind init,
                                    const ssl::Checkpoint* checkpoint,
                                    double fraction, bool grid_search,
                                    const data::DatasetManifest& labeled,
                                    const std::string& base_dir) {
  FinetuneArtifacts out;
  data::DatasetManifest pool =
      data::subsample_labeled(labeled, fraction, config.seed);
  pool.split_tags.clear();

  ft::FinetuneConfig chosen = config.finetune.train;
  chosen.init = init;
  if (grid_search) {
    log_info("grid search over " +
             std::to_string(config.finetune.grid.lr_grid.size() *
                            config.finetune.grid.optimizer_grid.size() *
                            config.finetune.grid.batch_grid.size()) +
             " points x " + std::to_string(config.finetune.grid.folds) +
             " folds");
    auto grid_result = ft::hyperparameter_search(
        pool, config.pretrain.encoder, init, checkpoint, config.finetune.grid,
        chosen, config.augment.policy, base_dir);
    out.cv_rows = std::move(grid_result.table);
    chosen = grid_result.best;
    log_info("chosen: lr=" + format_double(chosen.learning_rate) +
             " optimizer=" + nn::optimizer_name(chosen.optimizer) +
             " batch=" + std::to_string(chosen.batch_size));
  }
  out.chosen = chosen;

  data::SplitFractions fr;
  fr.train = 1.0 - config.finetune.val_fraction;
  fr.val = config.finetune.val_fraction;
  fr.test = 0.0;
  const auto tagged = data::make_patient_splits(pool, fr, config.seed);

  out.model = ft::build_classifier(init, config.pretrain.encoder, config.seed,
                                   checkpoint);
  out.fit = ft::finetune(*out.model, tagged.subset(data::Split::train),
                         tagged.subset(data::Split::val), chosen,
                         config.augment.policy, base_dir);
  if (!grid_search) {
    ft::CvRow row;
    row.lr = chosen.learning_rate;
    row.optimizer = chosen.optimizer;
    row.batch = chosen.batch_size;
    row.fold = 0;
    row.val_auc = out.fit.best_val_auc;
    row.status = "ok";
    out.cv_rows.push_back(row);
  }
  return out;
}

// ---- commands ---------------------------------------------------------------

int cmd_synth(const cfg::RunConfig& config, const std::string& out_dir) {
  synth::SynthOptions opt;
  opt.n = config.data.synth_n;
  opt.image_size = config.data.synth_size;
  opt.n_styles = config.data.synth_styles;
  const auto manifest = synth::generate_dataset(out_dir, opt, config.seed);
  std::size_t referable = 0;
  for (const auto& r : manifest.records)
    referable += data::grade_to_referable(r.grade);
  std::cout << "synth: wrote " << manifest.records.size() << " images ("
            << referable << " referable) and " << opt.n_styles
            << " styles to " << out_dir << "\n";
  return 0;
}

int cmd_ingest(const cfg::RunConfig& config, const std::string& manifest_path,
               const std::string& out_dir) {
  const auto manifest = load_manifest_checked(manifest_path);
  const auto result = ingest::filter_quality(manifest, config.quality,
                                             manifest_dir(manifest_path));
  data::write_manifest_csv((fs::path(out_dir) / "kept.csv").string(),
                           result.kept);
  data::write_manifest_csv((fs::path(out_dir) / "excluded.csv").string(),
                           result.excluded);
  ingest::write_exclusion_report(
      (fs::path(out_dir) / "exclusion_report.csv").string(), result.reasons);
  std::cout << "ingest: kept " << result.kept.records.size() << " excluded "
            << result.excluded.records.size() << "\n";
  return 0;
}

int cmd_pretrain(const cfg::RunConfig& config, const std::string& manifest_path,
                 const std::string& out_dir) {
  const auto manifest = load_manifest_checked(manifest_path);
  const auto bank = load_bank_if_needed(config);
  const auto result = ssl::pretrain(
      manifest, config.augment.policy, bank, config.pretrain.encoder,
      config.pretrain.head, config.pretrain.train, manifest_dir(manifest_path));

  ssl::Checkpoint ckpt = result.checkpoint;
  ckpt.config_digest = config.digest();
  ssl::save_checkpoint(ckpt, (fs::path(out_dir) / "checkpoint.fnck").string());

  CsvTable loss;
  loss.header = {"epoch", "loss"};
  for (std::size_t e = 0; e < result.loss_history.size(); ++e)
    loss.rows.push_back(
        {std::to_string(e), format_double(result.loss_history[e])});
  write_csv((fs::path(out_dir) / "loss.csv").string(), loss);

  std::cout << "pretrain: " << result.loss_history.size()
            << " epochs, best loss " << format_double(result.best_loss)
            << " at epoch " << result.best_epoch << "\n";
  return 0;
}

int cmd_finetune(const cfg::RunConfig& config, const std::string& init_str,
                 double fraction_flag, const std::string& checkpoint_path,
                 bool grid_flag, bool freeze_flag,
                 const std::string& manifest_path, const std::string& out_dir) {
  const ft::InitKind init = ft::parse_init(init_str);
  ssl::Checkpoint ckpt;
  const ssl::Checkpoint* ckpt_ptr = nullptr;
  if (init == ft::InitKind::contrastive_checkpoint) {
    require_input(!checkpoint_path.empty(),
                  "--checkpoint is required with --init cl");
    ckpt = ssl::load_checkpoint(checkpoint_path);
    ckpt_ptr = &ckpt;
  }
  const double fraction =
      fraction_flag > 0 ? fraction_flag : config.finetune.label_fraction;
  cfg::RunConfig cfg_local = config;
  if (freeze_flag) cfg_local.finetune.train.freeze_encoder = true;
  const auto labeled = load_manifest_checked(manifest_path);

  auto artifacts = run_finetune_flow(
      cfg_local, init, ckpt_ptr, fraction,
      grid_flag || cfg_local.finetune.grid_search, labeled,
      manifest_dir(manifest_path));

  ft::write_cv_table((fs::path(out_dir) / "cv_table.csv").string(),
                     artifacts.cv_rows);
  save_classifier(*artifacts.model,
                  (fs::path(out_dir) / "model.fnck").string(), cfg_local,
                  artifacts.fit.operating_threshold, init_str,
                  artifacts.fit.best_epoch, artifacts.fit.best_val_auc);

  CsvTable hist;
  hist.header = {"epoch", "train_loss", "val_auc"};
  for (std::size_t e = 0; e < artifacts.fit.history.train_loss.size(); ++e)
    hist.rows.push_back({std::to_string(e),
                         format_double(artifacts.fit.history.train_loss[e]),
                         format_double(artifacts.fit.history.val_auc[e])});
  write_csv((fs::path(out_dir) / "history.csv").string(), hist);

  std::cout << "finetune: init=" << init_str << " fraction="
            << format_double(fraction) << " best val AUC "
            << format_double(artifacts.fit.best_val_auc) << " (epoch "
            << artifacts.fit.best_epoch << "), lr="
            << format_double(artifacts.chosen.learning_rate) << " optimizer="
            << nn::optimizer_name(artifacts.chosen.optimizer) << " batch="
            << artifacts.chosen.batch_size << "\n";
  return 0;
}

int cmd_eval(const cfg::RunConfig& config, const std::string& model_path,
             const std::string& test_path, const std::string& compare_path,
             const std::string& out_dir) {
  auto loaded = load_classifier(model_path);
  const auto test = load_manifest_checked(test_path);
  const auto pred =
      ft::predict_proba(*loaded.model, test, manifest_dir(test_path));
  for (const auto& [id, why] : pred.failures)
    log_warn("prediction failed for " + id + ": " + why);
  const auto set = scores_from_prediction(test, pred);
  set.validate_two_class();

  std::optional<double> threshold;
  if (loaded.has_threshold) threshold = loaded.threshold;
  auto report = sweep::evaluate_scores(set, config.eval.bootstrap_resamples,
                                       config.seed, threshold);

  write_scores_csv((fs::path(out_dir) / "scores.csv").string(), test, pred);
  const auto curve = stats::roc_points(set);
  stats::write_roc_csv((fs::path(out_dir) / "roc.csv").string(), curve);
  write_text_file((fs::path(out_dir) / "roc.svg").string(),
                  svg::roc_chart(curve, "receiver operating characteristic"));

  if (!compare_path.empty()) {
    const CsvTable other = read_csv(compare_path);
    require_input(other.header ==
                      std::vector<std::string>{"image_id", "label", "score"},
                  "--compare file must have header image_id,label,score");
    std::map<std::string, std::pair<int, double>> by_id;
    for (const auto& row : other.rows)
      by_id[row[0]] = {std::stoi(row[1]), std::stod(row[2])};
    stats::ScoredSet ours, theirs;
    for (std::size_t i = 0; i < test.records.size(); ++i) {
      if (!std::isfinite(pred.probs[i])) continue;
      const auto it = by_id.find(test.records[i].image_id);
      require_input(it != by_id.end(), "--compare file missing image_id " +
                                           test.records[i].image_id);
      const int label =
          data::grade_to_referable(test.records[i].grade) ? 1 : 0;
      require_input(it->second.first == label,
                    "--compare label mismatch for " + test.records[i].image_id);
      ours.scores.push_back(pred.probs[i]);
      ours.labels.push_back(label);
      theirs.scores.push_back(it->second.second);
      theirs.labels.push_back(label);
    }
    const auto dl = stats::delong_test(ours, theirs);
    sweep::EvalReport::Comparison cmp;
    cmp.other_id = fs::path(compare_path).stem().string();
    cmp.auc_other = dl.auc_b;
    cmp.z = dl.z;
    cmp.p = dl.p;
    report.comparisons.push_back(cmp);
  }

  write_text_file((fs::path(out_dir) / "report.json").string(),
                  sweep::report_json(report));
  std::cout << "eval: auc " << format_double(report.auc) << " ["
            << format_double(report.auc_ci.first) << ", "
            << format_double(report.auc_ci.second) << "], sens "
            << format_double(report.sensitivity) << ", spec "
            << format_double(report.specificity) << " at threshold "
            << format_double(report.threshold) << "\n";
  return 0;
}

int cmd_sweep(const cfg::RunConfig& config, const std::string& kind,
              const std::string& checkpoint_path, bool research_per_fraction,
              const std::string& out_dir) {
  require_input(kind == "labels" || kind == "batch",
                "--kind must be labels or batch");
  const std::string train_path =
      require_path("", config.data.train_manifest, "data.train_manifest");
  const std::string test_path =
      require_path("", config.data.test_manifest, "data.test_manifest");

  sweep::CellContext cell;
  cell.train = load_manifest_checked(train_path);
  cell.test = load_manifest_checked(test_path);
  cell.train_base_dir = manifest_dir(train_path);
  cell.test_base_dir = manifest_dir(test_path);
  cell.encoder = config.pretrain.encoder;
  cell.finetune = config.finetune.train;
  cell.policy = config.augment.policy;
  cell.val_fraction = config.finetune.val_fraction;

  std::size_t total = 0, failed = 0;
  if (kind == "labels") {
    require_input(!checkpoint_path.empty(),
                  "--checkpoint is required for --kind labels");
    const auto ckpt = ssl::load_checkpoint(checkpoint_path);
    cell.checkpoint = &ckpt;

    std::vector<sweep::SweepRow> rows;
    if (research_per_fraction || config.sweep.research_per_fraction) {
      for (const double f : config.sweep.fractions) {
        auto pool = data::subsample_labeled(cell.train, f, config.seed);
        pool.split_tags.clear();
        auto grid_result = ft::hyperparameter_search(
            pool, cell.encoder, ft::InitKind::contrastive_checkpoint, &ckpt,
            config.finetune.grid, cell.finetune, cell.policy,
            cell.train_base_dir);
        sweep::CellContext tuned = cell;
        tuned.finetune = grid_result.best;
        const auto part =
            sweep::label_efficiency_sweep(tuned, {f}, config.sweep.seeds);
        rows.insert(rows.end(), part.begin(), part.end());
      }
    } else {
      rows = sweep::label_efficiency_sweep(cell, config.sweep.fractions,
                                           config.sweep.seeds);
    }
    sweep::write_sweep_csv((fs::path(out_dir) / "sweep.csv").string(), rows);

    const auto summary = sweep::summarize_label_sweep(rows);
    std::vector<svg::Series> series(2);
    series[0].label = "cl";
    series[1].label = "random";
    for (const auto& s : summary) {
      auto& dst = s.init == "cl" ? series[0] : series[1];
      dst.points.emplace_back(s.key, s.mean_auc);
      dst.err.push_back(s.sd_auc);
    }
    svg::ChartOptions opts;
    opts.title = "label efficiency";
    opts.x_label = "label fraction";
    opts.y_label = "test AUC";
    write_text_file((fs::path(out_dir) / "sweep.svg").string(),
                    svg::line_chart(series, opts));

    total = rows.size();
    for (const auto& r : rows)
      if (r.status != "ok") {
        ++failed;
        log_warn("cell failed: fraction=" + format_double(r.fraction) +
                 " init=" + r.init + " seed=" + std::to_string(r.seed) + ": " +
                 r.status);
      }
    for (const auto& s : summary)
      std::cout << "sweep: fraction " << format_double(s.key) << " " << s.init
                << " mean auc " << format_double(s.mean_auc) << " sd "
                << format_double(s.sd_auc) << " (n=" << s.n << ")\n";
  } else {
    const std::string unlabeled_path = require_path(
        "", config.data.unlabeled_manifest, "data.unlabeled_manifest");
    sweep::BatchContext bctx;
    bctx.unlabeled = load_manifest_checked(unlabeled_path);
    bctx.unlabeled_base_dir = manifest_dir(unlabeled_path);
    bctx.pretrain_policy = config.augment.policy;
    bctx.bank = load_bank_if_needed(config);
    bctx.encoder = config.pretrain.encoder;
    bctx.head = config.pretrain.head;
    bctx.pretrain = config.pretrain.train;
    bctx.cell = cell;

    const auto rows = sweep::batch_size_sweep(bctx, config.sweep.batch_sizes,
                                              config.sweep.seeds);
    sweep::write_batch_csv((fs::path(out_dir) / "batch_sweep.csv").string(),
                           rows);
    const auto summary = sweep::summarize_batch_sweep(rows);
    svg::Series series;
    series.label = "cl";
    for (const auto& s : summary) {
      series.points.emplace_back(s.key, s.mean_auc);
      series.err.push_back(s.sd_auc);
    }
    svg::ChartOptions opts;
    opts.title = "pretraining batch size";
    opts.x_label = "batch size";
    opts.y_label = "test AUC";
    write_text_file((fs::path(out_dir) / "sweep.svg").string(),
                    svg::line_chart({series}, opts));

    total = rows.size();
    for (const auto& r : rows)
      if (r.status != "ok") ++failed;
    const auto [ups, downs] = sweep::batch_direction(summary);
    std::cout << "sweep: batch-size direction over means: " << ups << " up / "
              << downs << " down across " << summary.size() << " sizes\n";
    for (const auto& s : summary)
      std::cout << "sweep: batch " << static_cast<int>(s.key) << " mean auc "
                << format_double(s.mean_auc) << " sd "
                << format_double(s.sd_auc) << " (n=" << s.n << ")\n";
  }

  if (failed * 5 > total) {  // more than 20% of cells failed
    std::cerr << "sweep: " << failed << "/" << total << " cells failed\n";
    return 1;
  }
  return 0;
}

int cmd_style_preview(const cfg::RunConfig& config, const std::string& input,
                      int count, const std::string& out_dir) {
  require_input(!config.augment.style_dir.empty(),
                "augment.style_dir must be set for style-preview");
  const auto bank = aug::load_style_bank(config.augment.style_dir);
  const Image img = ingest::load_image(input);
  ingest::save_png((fs::path(out_dir) / "preview_before.png").string(), img);
  const int n = std::min<int>(count, static_cast<int>(bank.styles.size()));
  for (int i = 0; i < n; ++i) {
    const Image styled =
        aug::nst_augment(img, bank.styles[static_cast<std::size_t>(i)],
                         config.augment.policy.nst_alpha, aug::identity_codec(),
                         config.augment.policy.nst_epsilon);
    char name[64];
    std::snprintf(name, sizeof(name), "preview_after_%03d.png", i);
    ingest::save_png((fs::path(out_dir) / name).string(), styled);
  }
  std::cout << "style-preview: wrote " << n << " styled variants to "
            << out_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"contrastive pretraining and referable-DR classification"};
  app.require_subcommand(1);

  std::string config_path, out_dir, manifest_flag, checkpoint_flag;
  std::string model_flag, test_flag, compare_flag, input_flag;
  std::string init_flag = "cl", kind_flag = "labels";
  double fraction_flag = -1.0;
  int preview_count = 4;
  bool grid_flag = false, freeze_flag = false, research_flag = false;
  std::optional<std::uint64_t> seed_flag;
  std::optional<int> jobs_flag;

  app.add_option("--config", config_path, "TOML run configuration");
  app.add_option("--seed", seed_flag, "override the root seed");
  app.add_option("--jobs", jobs_flag, "worker threads (default 1)");
  app.add_option("--out", out_dir, "output directory (default runs/<id>)");

  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  auto* ingest_cmd = app.add_subcommand("ingest", "quality-filter a manifest");
  ingest_cmd->add_option("--manifest", manifest_flag, "input manifest CSV");
  auto* pretrain = app.add_subcommand("pretrain", "contrastive pretraining");
  pretrain->add_option("--manifest", manifest_flag, "unlabeled manifest CSV");
  auto* finetune = app.add_subcommand("finetune", "supervised fine-tuning");
  finetune->add_option("--init", init_flag, "cl or random");
  finetune->add_option("--fraction", fraction_flag,
                       "labeled fraction in (0,1]");
  finetune->add_option("--checkpoint", checkpoint_flag,
                       "pretraining checkpoint (required for --init cl)");
  finetune->add_option("--manifest", manifest_flag, "labeled manifest CSV");
  finetune->add_flag("--grid", grid_flag, "run the hyperparameter grid");
  finetune->add_flag("--freeze-encoder", freeze_flag,
                     "train only the classification head");
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a trained model");
  eval_cmd->add_option("--model", model_flag, "model checkpoint")->required();
  eval_cmd->add_option("--test", test_flag, "test manifest CSV");
  eval_cmd->add_option("--compare", compare_flag,
                       "scores.csv from another run for a paired test");
  auto* sweep_cmd = app.add_subcommand("sweep", "label or batch-size sweep");
  sweep_cmd->add_option("--kind", kind_flag, "labels or batch");
  sweep_cmd->add_option("--checkpoint", checkpoint_flag,
                        "pretraining checkpoint (labels sweep)");
  sweep_cmd->add_flag("--research-per-fraction", research_flag,
                      "re-run the grid per fraction");
  auto* preview = app.add_subcommand("style-preview",
                                     "write before/after style transfers");
  preview->add_option("--input", input_flag, "input image")->required();
  preview->add_option("--n", preview_count, "number of styles to preview");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    const cfg::RunConfig config = load_config(config_path, seed_flag, jobs_flag);
    const std::string run_dir = open_run_dir(config, out_dir);
    if (synth->parsed()) return cmd_synth(config, run_dir);
    if (ingest_cmd->parsed())
      return cmd_ingest(config,
                        require_path(manifest_flag, config.data.manifest,
                                     "data.manifest"),
                        run_dir);
    if (pretrain->parsed())
      return cmd_pretrain(config,
                          require_path(manifest_flag,
                                       config.data.unlabeled_manifest,
                                       "data.unlabeled_manifest"),
                          run_dir);
    if (finetune->parsed())
      return cmd_finetune(config, init_flag, fraction_flag, checkpoint_flag,
                          grid_flag, freeze_flag,
                          require_path(manifest_flag,
                                       config.data.train_manifest,
                                       "data.train_manifest"),
                          run_dir);
    if (eval_cmd->parsed())
      return cmd_eval(config, model_flag,
                      require_path(test_flag, config.data.test_manifest,
                                   "data.test_manifest"),
                      compare_flag, run_dir);
    if (sweep_cmd->parsed())
      return cmd_sweep(config, kind_flag, checkpoint_flag, research_flag,
                       run_dir);
    if (preview->parsed())
      return cmd_style_preview(config, input_flag, preview_count, run_dir);
    throw UsageError("no subcommand given");
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
}
