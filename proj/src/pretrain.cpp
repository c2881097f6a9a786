#include "fundus/pretrain.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "fundus/csv.hpp"
#include "fundus/dataset.hpp"
#include "fundus/error.hpp"
#include "fundus/ntxent.hpp"
#include "fundus/rng.hpp"

namespace fundus::ssl {

void PretrainConfig::validate() const {
  require_input(batch_size >= 2, "pretrain: batch_size must be >= 2");
  require_input(temperature > 0.0, "pretrain: temperature must be > 0");
  require_input(max_epochs >= 1, "pretrain: max_epochs must be >= 1");
  require_input(learning_rate >= 0.0, "pretrain: learning_rate must be >= 0");
  require_input(saturation_patience >= 1, "pretrain: patience must be >= 1");
  require_input(saturation_delta >= 0.0, "pretrain: delta must be >= 0");
}

std::string encoder_config_json(const nn::EncoderConfig& cfg) {
  nlohmann::json j;
  j["family"] = nn::EncoderConfig::family_name(cfg.family);
  nlohmann::json stages = nlohmann::json::array();
  for (const auto& s : cfg.stages) stages.push_back({s.blocks, s.channels});
  j["stages"] = stages;
  j["embedding_dim"] = cfg.embedding_dim;
  j["input_size"] = cfg.input_size;
  return j.dump();
}

nn::EncoderConfig encoder_config_from_json(const std::string& json_text) {
  const auto j = nlohmann::json::parse(json_text);
  nn::EncoderConfig cfg;
  cfg.family = nn::EncoderConfig::parse_family(j.at("family").get<std::string>());
  cfg.stages.clear();
  for (const auto& s : j.at("stages"))
    cfg.stages.push_back({s.at(0).get<int>(), s.at(1).get<int>()});
  cfg.embedding_dim = j.at("embedding_dim").get<int>();
  cfg.input_size = j.at("input_size").get<int>();
  cfg.validate();
  return cfg;
}

PretrainResult pretrain(const data::DatasetManifest& manifest,
                        const aug::AugmentationPolicy& policy,
                        const aug::StyleBank& bank,
                        const nn::EncoderConfig& encoder_cfg,
                        const nn::ProjectionHeadConfig& head_cfg,
                        const PretrainConfig& cfg, const std::string& base_dir,
                        const aug::FeatureCodec& codec) {
  cfg.validate();
  policy.validate();
  encoder_cfg.validate();
  head_cfg.validate();
  require_input(policy.out_size == encoder_cfg.input_size,
                "pretrain: augment out_size must match encoder input_size");

  data::DatasetManifest usable;
  for (const auto& r : manifest.records)
    if (manifest.tag_of(r.image_id) != data::Split::excluded)
      usable.records.push_back(r);
  const std::size_t n_images = usable.records.size();
  require_input(n_images >= static_cast<std::size_t>(cfg.batch_size),
                "pretrain: dataset smaller than one batch (" +
                    std::to_string(n_images) + " < " +
                    std::to_string(cfg.batch_size) + ")");

  ImageStore store(usable, base_dir);

  nn::ParamRegistry reg;
  nn::EncoderNet encoder(encoder_cfg, reg);
  nn::ProjectionNet proj(encoder_cfg.embedding_dim, head_cfg, reg);
  std::vector<float> theta(reg.total);
  nn::init_params(reg, theta, cfg.seed);

  nn::Optimizer opt;
  opt.kind = cfg.optimizer;
  opt.lr = cfg.learning_rate;

  const int batch = cfg.batch_size;
  const std::size_t steps_per_epoch = n_images / static_cast<std::size_t>(batch);
  const int rows = 2 * batch;
  const int zdim = head_cfg.output_dim;

  struct ViewTape {
    nn::EncoderTape enc;
    nn::ProjectionTape proj;
  };

  PretrainResult result;
  std::vector<float> best_theta = theta;
  double best_loss = std::numeric_limits<double>::infinity();
  int best_epoch = 0;
  int stale_epochs = 0;

  std::vector<std::size_t> order(n_images);
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  std::vector<float> grad(reg.total);
  std::vector<std::vector<float>> chunk_grads(kReduceChunks);

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    Rng shuffle_rng =
        Rng::stream(cfg.seed, "pretrain/epoch/" + std::to_string(epoch) + "/shuffle");
    shuffle_rng.shuffle(order);

    double epoch_loss = 0.0;
    for (std::size_t step = 0; step < steps_per_epoch; ++step) {
      const std::size_t* batch_idx = order.data() + step * static_cast<std::size_t>(batch);

      std::vector<ViewTape> tapes(static_cast<std::size_t>(rows));
      std::vector<double> z(static_cast<std::size_t>(rows) * zdim);

      parallel_chunks(static_cast<std::size_t>(batch), cfg.jobs,
                      [&](int, std::size_t b, std::size_t e) {
        for (std::size_t k = b; k < e; ++k) {
          const std::size_t img_idx = batch_idx[k];
          Rng rng = Rng::stream(cfg.seed, "pretrain/epoch/" + std::to_string(epoch) +
                                              "/img/" + std::to_string(img_idx));
          const Image img = store.get(img_idx);
          auto views = aug::make_view_pair(img, policy, bank, rng, codec);
          const Image* view_ptr[2] = {&views.first, &views.second};
          for (int v = 0; v < 2; ++v) {
            const std::size_t row = 2 * k + static_cast<std::size_t>(v);
            auto& tape = tapes[row];
            const FeatureMap input = image_to_chw(*view_ptr[v]);
            const auto h = encoder.forward(theta.data(), input, &tape.enc);
            const auto zv = proj.forward(theta.data(), h, &tape.proj);
            for (int j = 0; j < zdim; ++j)
              z[row * static_cast<std::size_t>(zdim) + j] = zv[static_cast<std::size_t>(j)];
          }
        }
      });

      const NtXentResult nx = nt_xent_loss(z, rows, zdim, cfg.temperature);
      if (!std::isfinite(nx.loss))
        throw std::runtime_error(
            "pretrain: loss diverged (non-finite) at epoch " +
            std::to_string(epoch) + " step " + std::to_string(step));
      epoch_loss += nx.loss;

      std::fill(grad.begin(), grad.end(), 0.f);
      parallel_chunks(static_cast<std::size_t>(rows), cfg.jobs,
                      [&](int chunk, std::size_t b, std::size_t e) {
        auto& cg = chunk_grads[static_cast<std::size_t>(chunk)];
        if (cg.size() != reg.total) cg.assign(reg.total, 0.f);
        else std::fill(cg.begin(), cg.end(), 0.f);
        std::vector<float> dz(static_cast<std::size_t>(zdim));
        for (std::size_t row = b; row < e; ++row) {
          for (int j = 0; j < zdim; ++j)
            dz[static_cast<std::size_t>(j)] = static_cast<float>(
                nx.grad[row * static_cast<std::size_t>(zdim) + j]);
          const auto dh =
              proj.backward(theta.data(), tapes[row].proj, dz, cg.data());
          encoder.backward(theta.data(), tapes[row].enc, dh, cg.data());
        }
      });
      for (const auto& cg : chunk_grads) {
        if (cg.empty()) continue;
        for (std::size_t i = 0; i < reg.total; ++i) grad[i] += cg[i];
      }
      for (auto& cg : chunk_grads) if (!cg.empty()) std::fill(cg.begin(), cg.end(), 0.f);

      opt.step(theta, grad);
    }

    epoch_loss /= static_cast<double>(steps_per_epoch);
    result.loss_history.push_back(epoch_loss);

    const double rel_gain =
        best_loss == std::numeric_limits<double>::infinity()
            ? 1.0
            : (best_loss - epoch_loss) / std::max(std::abs(best_loss), 1e-12);
    if (rel_gain >= cfg.saturation_delta) {
      best_loss = epoch_loss;
      best_epoch = epoch;
      best_theta = theta;
      stale_epochs = 0;
    } else {
      if (epoch_loss < best_loss) {  // still keep strictly better weights
        best_loss = epoch_loss;
        best_epoch = epoch;
        best_theta = theta;
      }
      ++stale_epochs;
      if (stale_epochs >= cfg.saturation_patience) break;
    }
  }

  result.best_epoch = best_epoch;
  result.best_loss = best_loss;
  result.checkpoint = snapshot_params(reg, best_theta);
  result.checkpoint.epoch = best_epoch;
  result.checkpoint.final_loss = best_loss;
  result.checkpoint.seed = cfg.seed;

  nlohmann::json extra;
  extra["encoder"] = nlohmann::json::parse(encoder_config_json(encoder_cfg));
  extra["projection"] = {{"hidden_dim", head_cfg.hidden_dim},
                         {"output_dim", head_cfg.output_dim}};
  extra["temperature"] = cfg.temperature;
  result.checkpoint.extra_json = extra.dump();
  result.checkpoint.config_digest =
      to_hex(fnv1a64(result.checkpoint.extra_json + "|" +
                     std::to_string(cfg.batch_size) + "|" +
                     format_double(cfg.learning_rate) + "|" +
                     nn::optimizer_name(cfg.optimizer) + "|" +
                     std::to_string(cfg.seed)));
  return result;
}

}  // namespace fundus::ssl
