#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fundus/augment.hpp"
#include "fundus/checkpoint.hpp"
#include "fundus/manifest.hpp"
#include "fundus/model.hpp"

namespace fundus::ssl {

struct PretrainConfig {
  int batch_size = 32;  // images per step; the loss sees 2x this many rows
  double temperature = 0.5;
  int max_epochs = 100;
  nn::OptimizerKind optimizer = nn::OptimizerKind::adam;
  double learning_rate = 1e-3;
  int saturation_patience = 10;
  double saturation_delta = 1e-3;  // relative improvement threshold
  std::uint64_t seed = 0;
  int jobs = 1;

  void validate() const;
};

struct PretrainResult {
  Checkpoint checkpoint;  // weights at the best epoch
  std::vector<double> loss_history;
  int best_epoch = 0;
  double best_loss = 0.0;
};

// Contrastive pretraining: per epoch, shuffles the data, builds two
// augmented views per image, and minimizes the temperature-scaled
// contrastive loss. Stops at max_epochs or once the best loss has not
// improved by `saturation_delta` (relative) for `saturation_patience`
// epochs. Partial trailing batches are dropped.
PretrainResult pretrain(const data::DatasetManifest& manifest,
                        const aug::AugmentationPolicy& policy,
                        const aug::StyleBank& bank,
                        const nn::EncoderConfig& encoder_cfg,
                        const nn::ProjectionHeadConfig& head_cfg,
                        const PretrainConfig& cfg,
                        const std::string& base_dir = "",
                        const aug::FeatureCodec& codec = aug::identity_codec());

// Canonical JSON for the encoder config; stored in checkpoints and audited
// when weights are transferred.
std::string encoder_config_json(const nn::EncoderConfig& cfg);
nn::EncoderConfig encoder_config_from_json(const std::string& json_text);

}  // namespace fundus::ssl
