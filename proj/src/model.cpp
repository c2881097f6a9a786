#include "fundus/model.hpp"

#include <algorithm>
#include <cmath>

#include "fundus/error.hpp"

namespace fundus::nn {

namespace {

int norm_groups(int channels) {
  int g = std::min(8, channels);
  while (channels % g != 0) --g;
  return g;
}

GroupNorm make_gn(ParamRegistry& reg, const std::string& prefix, int channels) {
  GroupNorm gn;
  gn.channels = channels;
  gn.groups = norm_groups(channels);
  gn.gamma_off = reg.add(prefix + ".gamma", {channels});
  gn.beta_off = reg.add(prefix + ".beta", {channels});
  return gn;
}

Conv2d make_conv(ParamRegistry& reg, const std::string& name, int in_c,
                 int out_c, int k, int stride) {
  Conv2d c;
  c.in_c = in_c;
  c.out_c = out_c;
  c.k = k;
  c.stride = stride;
  c.pad = k / 2;
  c.w_off = reg.add(name + ".w", {out_c, in_c, k, k});
  return c;
}

}  // namespace

void EncoderConfig::validate() const {
  require_input(!stages.empty(), "encoder: stages must be non-empty");
  for (const auto& s : stages)
    require_input(s.blocks >= 1 && s.channels >= 1, "encoder: bad stage spec");
  require_input(embedding_dim >= 2, "encoder: embedding_dim must be >= 2");
  require_input(input_size >= 8, "encoder: input_size must be >= 8");
}

EncoderConfig EncoderConfig::small_resnet() { return EncoderConfig{}; }

EncoderConfig EncoderConfig::resnet50_like() {
  EncoderConfig cfg;
  cfg.family = Family::resnet50_like;
  cfg.stages = {{3, 64}, {4, 128}, {6, 256}, {3, 512}};
  cfg.embedding_dim = 2048;
  cfg.input_size = 224;
  return cfg;
}

EncoderConfig::Family EncoderConfig::parse_family(const std::string& s) {
  if (s == "small_resnet") return Family::small_resnet;
  if (s == "resnet50_like") return Family::resnet50_like;
  throw UsageError("unknown encoder family: " + s);
}

const char* EncoderConfig::family_name(Family f) {
  return f == Family::small_resnet ? "small_resnet" : "resnet50_like";
}

void ProjectionHeadConfig::validate() const {
  require_input(hidden_dim >= 2 && output_dim >= 2,
                "projection head: dims must be >= 2");
}

EncoderNet::EncoderNet(const EncoderConfig& cfg, ParamRegistry& reg,
                       const std::string& prefix)
    : cfg_(cfg) {
  cfg_.validate();
  const int c0 = cfg_.stages[0].channels;
  const bool large = cfg_.family == EncoderConfig::Family::resnet50_like;
  stem_ = make_conv(reg, prefix + ".stem.conv", 3, c0, large ? 7 : 3,
                    large ? 2 : 1);
  stem_gn_ = make_gn(reg, prefix + ".stem.gn", c0);
  has_maxpool_ = large;

  int in_c = c0;
  for (std::size_t si = 0; si < cfg_.stages.size(); ++si) {
    const auto& st = cfg_.stages[si];
    for (int bi = 0; bi < st.blocks; ++bi) {
      const int stride = (si > 0 && bi == 0) ? 2 : 1;
      const std::string base =
          prefix + ".s" + std::to_string(si) + ".b" + std::to_string(bi);
      ResidualBlock blk;
      blk.conv1 = make_conv(reg, base + ".conv1", in_c, st.channels, 3, stride);
      blk.gn1 = make_gn(reg, base + ".gn1", st.channels);
      blk.conv2 = make_conv(reg, base + ".conv2", st.channels, st.channels, 3, 1);
      blk.gn2 = make_gn(reg, base + ".gn2", st.channels);
      blk.has_proj = (stride != 1 || in_c != st.channels);
      if (blk.has_proj) {
        blk.proj = make_conv(reg, base + ".proj", in_c, st.channels, 1, stride);
        blk.proj_gn = make_gn(reg, base + ".proj_gn", st.channels);
      }
      blocks_.push_back(blk);
      in_c = st.channels;
    }
  }
  fc_.in_dim = in_c;
  fc_.out_dim = cfg_.embedding_dim;
  fc_.w_off = reg.add(prefix + ".fc.w", {cfg_.embedding_dim, in_c});
  fc_.b_off = reg.add(prefix + ".fc.b", {cfg_.embedding_dim});
}

std::vector<float> EncoderNet::forward(const float* theta,
                                       const FeatureMap& input,
                                       EncoderTape* tape) const {
  require_input(input.channels == 3 && input.height == cfg_.input_size &&
                    input.width == cfg_.input_size,
                "encoder: input shape mismatch (want 3x" +
                    std::to_string(cfg_.input_size) + "x" +
                    std::to_string(cfg_.input_size) + ")");
  EncoderTape local;
  EncoderTape& t = tape ? *tape : local;
  t.blocks.clear();

  t.input = input;
  FeatureMap cur;
  conv2d_forward(stem_, theta, input, cur);
  FeatureMap normed;
  groupnorm_forward(stem_gn_, theta, cur, normed, t.stem_gn);
  relu_inplace(normed);
  t.stem_out = normed;
  if (has_maxpool_) {
    FeatureMap pooled;
    maxpool3x3s2_forward(normed, pooled, t.pool_argmax);
    t.pooled_in = std::move(pooled);
  } else {
    t.pooled_in = normed;
  }

  FeatureMap x = t.pooled_in;
  t.blocks.resize(blocks_.size());
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const auto& blk = blocks_[i];
    auto& bt = t.blocks[i];
    bt.x_in = x;

    FeatureMap a1;
    conv2d_forward(blk.conv1, theta, x, a1);
    FeatureMap b1;
    groupnorm_forward(blk.gn1, theta, a1, b1, bt.gn1);
    relu_inplace(b1);
    bt.r1 = b1;

    FeatureMap a2;
    conv2d_forward(blk.conv2, theta, b1, a2);
    FeatureMap b2;
    groupnorm_forward(blk.gn2, theta, a2, b2, bt.gn2);

    FeatureMap shortcut;
    if (blk.has_proj) {
      FeatureMap sp;
      conv2d_forward(blk.proj, theta, x, sp);
      groupnorm_forward(blk.proj_gn, theta, sp, shortcut, bt.proj_gn);
    } else {
      shortcut = x;
    }
    for (std::size_t j = 0; j < b2.data.size(); ++j) {
      float v = b2.data[j] + shortcut.data[j];
      b2.data[j] = v > 0.f ? v : 0.f;
    }
    bt.y = b2;
    x = std::move(b2);
  }

  std::vector<float> pooled;
  global_avg_pool(x, pooled);
  t.pooled = pooled;

  std::vector<float> h(static_cast<std::size_t>(fc_.out_dim));
  linear_forward(fc_, theta, pooled.data(), h.data());
  return h;
}

void EncoderNet::backward(const float* theta, const EncoderTape& tape,
                          std::span<const float> dh, float* grad) const {
  std::vector<float> dpooled(static_cast<std::size_t>(fc_.in_dim));
  linear_backward(fc_, theta, tape.pooled.data(), dh.data(), dpooled.data(),
                  grad);

  const FeatureMap& last = tape.blocks.empty() ? tape.pooled_in
                                               : tape.blocks.back().y;
  FeatureMap dx;
  global_avg_pool_backward(last.height, last.width, dpooled, dx);

  for (std::size_t i = blocks_.size(); i-- > 0;) {
    const auto& blk = blocks_[i];
    const auto& bt = tape.blocks[i];

    // Output ReLU: dx *= (y > 0); the masked gradient feeds both branches.
    relu_backward_inplace(bt.y, dx);

    FeatureMap d_main;
    groupnorm_backward(blk.gn2, theta, bt.gn2, dx, d_main, grad);
    FeatureMap d_r1;
    conv2d_backward(blk.conv2, theta, bt.r1, d_main, &d_r1, grad);
    relu_backward_inplace(bt.r1, d_r1);
    FeatureMap d_a1;
    groupnorm_backward(blk.gn1, theta, bt.gn1, d_r1, d_a1, grad);
    FeatureMap d_x(bt.x_in.channels, bt.x_in.height, bt.x_in.width);
    conv2d_backward(blk.conv1, theta, bt.x_in, d_a1, &d_x, grad);

    if (blk.has_proj) {
      FeatureMap d_sp;
      groupnorm_backward(blk.proj_gn, theta, bt.proj_gn, dx, d_sp, grad);
      conv2d_backward(blk.proj, theta, bt.x_in, d_sp, &d_x, grad);
    } else {
      for (std::size_t j = 0; j < d_x.data.size(); ++j)
        d_x.data[j] += dx.data[j];
    }
    dx = std::move(d_x);
  }

  if (has_maxpool_) {
    FeatureMap d_stem;
    maxpool3x3s2_backward(tape.stem_out, tape.pool_argmax, dx, d_stem);
    dx = std::move(d_stem);
  }
  relu_backward_inplace(tape.stem_out, dx);
  FeatureMap d_conv;
  groupnorm_backward(stem_gn_, theta, tape.stem_gn, dx, d_conv, grad);
  conv2d_backward(stem_, theta, tape.input, d_conv, nullptr, grad);
}

ProjectionNet::ProjectionNet(int in_dim, const ProjectionHeadConfig& cfg,
                             ParamRegistry& reg, const std::string& prefix)
    : cfg_(cfg) {
  cfg_.validate();
  fc1_.in_dim = in_dim;
  fc1_.out_dim = cfg_.hidden_dim;
  fc1_.w_off = reg.add(prefix + ".fc1.w", {cfg_.hidden_dim, in_dim});
  fc1_.b_off = reg.add(prefix + ".fc1.b", {cfg_.hidden_dim});
  fc2_.in_dim = cfg_.hidden_dim;
  fc2_.out_dim = cfg_.output_dim;
  fc2_.w_off = reg.add(prefix + ".fc2.w", {cfg_.output_dim, cfg_.hidden_dim});
  fc2_.b_off = reg.add(prefix + ".fc2.b", {cfg_.output_dim});
}

std::vector<float> ProjectionNet::forward(const float* theta,
                                          std::span<const float> h,
                                          ProjectionTape* tape) const {
  require(static_cast<int>(h.size()) == fc1_.in_dim,
          "projection: input dim mismatch");
  std::vector<float> a1(static_cast<std::size_t>(fc1_.out_dim));
  linear_forward(fc1_, theta, h.data(), a1.data());
  std::vector<float> r = a1;
  for (auto& v : r)
    if (v < 0.f) v = 0.f;
  std::vector<float> z(static_cast<std::size_t>(fc2_.out_dim));
  linear_forward(fc2_, theta, r.data(), z.data());
  if (tape) {
    tape->h.assign(h.begin(), h.end());
    tape->a1 = std::move(a1);
    tape->r = std::move(r);
  }
  return z;
}

std::vector<float> ProjectionNet::backward(const float* theta,
                                           const ProjectionTape& tape,
                                           std::span<const float> dz,
                                           float* grad) const {
  std::vector<float> dr(static_cast<std::size_t>(fc2_.in_dim));
  linear_backward(fc2_, theta, tape.r.data(), dz.data(), dr.data(), grad);
  for (std::size_t i = 0; i < dr.size(); ++i)
    if (tape.a1[i] <= 0.f) dr[i] = 0.f;
  std::vector<float> dh(static_cast<std::size_t>(fc1_.in_dim));
  linear_backward(fc1_, theta, tape.h.data(), dr.data(), dh.data(), grad);
  return dh;
}

ClassifierNet::ClassifierNet(const EncoderConfig& cfg) {
  encoder_ = std::make_unique<EncoderNet>(cfg, reg_);
  head_.in_dim = cfg.embedding_dim;
  head_.out_dim = 2;
  head_.w_off = reg_.add("head.w", {2, cfg.embedding_dim});
  head_.b_off = reg_.add("head.b", {2});
  theta_.assign(reg_.total, 0.f);
}

void ClassifierNet::init(std::uint64_t seed) {
  init_params(reg_, theta_, seed);
}

std::pair<double, double> softmax2(double a, double b) {
  const double m = std::max(a, b);
  const double ea = std::exp(a - m), eb = std::exp(b - m);
  const double s = ea + eb;
  return {ea / s, eb / s};
}

std::pair<double, double> ClassifierNet::predict_probs(
    const FeatureMap& input) const {
  const auto h = encoder_->forward(theta_.data(), input, nullptr);
  float logits[2];
  linear_forward(head_, theta_.data(), h.data(), logits);
  return softmax2(logits[0], logits[1]);
}

double ClassifierNet::predict_referable(const FeatureMap& input) const {
  return predict_probs(input).second;
}

double ClassifierNet::train_example(const FeatureMap& input, int label,
                                    double weight, float* grad,
                                    bool freeze_encoder) const {
  require(label == 0 || label == 1, "train_example: label must be 0/1");
  EncoderTape tape;
  const auto h = encoder_->forward(theta_.data(), input, &tape);
  float logits[2];
  linear_forward(head_, theta_.data(), h.data(), logits);
  const auto [p0, p1] = softmax2(logits[0], logits[1]);
  const double p_true = label == 0 ? p0 : p1;
  const double loss = -std::log(std::max(p_true, 1e-12));

  const float dlogits[2] = {
      static_cast<float>((p0 - (label == 0 ? 1.0 : 0.0)) * weight),
      static_cast<float>((p1 - (label == 1 ? 1.0 : 0.0)) * weight)};
  std::vector<float> dh(h.size());
  linear_backward(head_, theta_.data(), h.data(), dlogits, dh.data(), grad);
  if (!freeze_encoder) encoder_->backward(theta_.data(), tape, dh, grad);
  return loss;
}

}  // namespace fundus::nn
