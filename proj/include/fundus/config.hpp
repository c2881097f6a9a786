#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fundus/augment.hpp"
#include "fundus/finetune.hpp"
#include "fundus/model.hpp"
#include "fundus/pretrain.hpp"
#include "fundus/quality.hpp"

namespace fundus::cfg {

// Experiment configuration, one TOML document with per-module sections.
// Unknown sections or keys are rejected; `canonical_toml()` renders the
// resolved document in a fixed order so identical configs digest equally.
struct RunConfig {
  std::uint64_t seed = 42;
  int jobs = 1;

  struct Data {
    std::string manifest;
    std::string unlabeled_manifest;
    std::string train_manifest;
    std::string test_manifest;
    int synth_n = 200;
    int synth_size = 64;
    int synth_styles = 16;
  } data;

  ingest::QualityThresholds quality;

  struct Augment {
    aug::AugmentationPolicy policy;
    std::string style_dir;
  } augment;

  struct Pretrain {
    ssl::PretrainConfig train;
    nn::EncoderConfig encoder;
    nn::ProjectionHeadConfig head;
  } pretrain;

  struct Finetune {
    ft::FinetuneConfig train;
    ft::GridConfig grid;
    bool grid_search = false;
    double label_fraction = 1.0;
    double val_fraction = 0.15;
  } finetune;

  struct Eval {
    int bootstrap_resamples = 2000;
  } eval;

  struct Sweep {
    std::vector<double> fractions = {0.1, 0.2, 0.3, 0.4, 0.5,
                                     0.6, 0.7, 0.8, 0.9, 1.0};
    int seeds = 5;
    std::vector<int> batch_sizes = {32, 64, 128, 256, 512, 1024, 2048, 4096};
    bool research_per_fraction = false;
  } sweep;

  static RunConfig defaults() { return RunConfig{}; }
  static RunConfig parse_toml(const std::string& text);
  static RunConfig load(const std::string& path);

  std::string canonical_toml() const;
  std::string digest() const;  // fnv-1a of the canonical form, hex

  void validate() const;
};

}  // namespace fundus::cfg
