#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "fundus/image.hpp"
#include "fundus/nn.hpp"

namespace fundus::nn {

struct StageSpec {
  int blocks = 2;
  int channels = 16;
};

// Residual encoder: stem conv + GN + ReLU (+ maxpool for the large family),
// basic two-conv blocks per stage (first block of stages past the first
// downsamples by 2), global average pool, and a final affine to the
// embedding dimension.
struct EncoderConfig {
  enum class Family { small_resnet, resnet50_like };
  Family family = Family::small_resnet;
  std::vector<StageSpec> stages = {{2, 16}, {2, 32}, {2, 64}};
  int embedding_dim = 128;
  int input_size = 224;

  void validate() const;
  static EncoderConfig small_resnet();
  static EncoderConfig resnet50_like();
  static Family parse_family(const std::string& s);
  static const char* family_name(Family f);
};

struct ProjectionHeadConfig {
  int hidden_dim = 128;
  int output_dim = 64;
  void validate() const;
};

struct ResidualBlock {
  Conv2d conv1, conv2;
  GroupNorm gn1, gn2;
  bool has_proj = false;
  Conv2d proj;
  GroupNorm proj_gn;
};

struct BlockTape {
  FeatureMap x_in;
  GnSaved gn1, gn2, proj_gn;
  FeatureMap r1;  // post-ReLU between the convs
  FeatureMap y;   // block output (post-ReLU)
};

struct EncoderTape {
  FeatureMap input;
  GnSaved stem_gn;
  FeatureMap stem_out;
  std::vector<std::int32_t> pool_argmax;
  FeatureMap pooled_in;  // stem_out or maxpool output
  std::vector<BlockTape> blocks;
  std::vector<float> pooled;  // GAP output, input to fc
};

class EncoderNet {
 public:
  EncoderNet(const EncoderConfig& cfg, ParamRegistry& reg,
             const std::string& prefix = "encoder");

  const EncoderConfig& config() const { return cfg_; }
  int out_dim() const { return cfg_.embedding_dim; }

  // Returns h; fills `tape` when non-null (required for backward).
  std::vector<float> forward(const float* theta, const FeatureMap& input,
                             EncoderTape* tape) const;
  // Accumulates parameter gradients into `grad`.
  void backward(const float* theta, const EncoderTape& tape,
                std::span<const float> dh, float* grad) const;

 private:
  EncoderConfig cfg_;
  Conv2d stem_;
  GroupNorm stem_gn_;
  bool has_maxpool_ = false;
  std::vector<ResidualBlock> blocks_;
  Linear fc_;
};

struct ProjectionTape {
  std::vector<float> h, a1, r;  // input, first affine, post-ReLU
};

class ProjectionNet {
 public:
  ProjectionNet(int in_dim, const ProjectionHeadConfig& cfg, ParamRegistry& reg,
                const std::string& prefix = "proj");
  int out_dim() const { return cfg_.output_dim; }
  std::vector<float> forward(const float* theta, std::span<const float> h,
                             ProjectionTape* tape) const;
  // Returns dh.
  std::vector<float> backward(const float* theta, const ProjectionTape& tape,
                              std::span<const float> dz, float* grad) const;

 private:
  ProjectionHeadConfig cfg_;
  Linear fc1_, fc2_;
};

// Encoder + two-way affine head; probabilities via softmax on the logits.
class ClassifierNet {
 public:
  ClassifierNet(const EncoderConfig& cfg);

  const ParamRegistry& registry() const { return reg_; }
  const EncoderNet& encoder() const { return *encoder_; }
  const Linear& head() const { return head_; }

  std::vector<float>& params() { return theta_; }
  const std::vector<float>& params() const { return theta_; }

  void init(std::uint64_t seed);

  // Referable probability for one image (no augmentation).
  double predict_referable(const FeatureMap& input) const;
  std::pair<double, double> predict_probs(const FeatureMap& input) const;

  // Cross-entropy loss and parameter gradients for one example; the
  // gradient is scaled by `weight` (1/batch for mean reduction).
  double train_example(const FeatureMap& input, int label, double weight,
                       float* grad, bool freeze_encoder = false) const;

 private:
  ParamRegistry reg_;
  std::unique_ptr<EncoderNet> encoder_;
  Linear head_;
  std::vector<float> theta_;
};

// softmax over 2 logits in double precision
std::pair<double, double> softmax2(double a, double b);

}  // namespace fundus::nn
