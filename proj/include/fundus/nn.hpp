#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fundus/image.hpp"

namespace fundus::nn {

// Named view into the flat parameter vector. Gradients use the same layout,
// so optimizers and checkpoints work on plain float spans.
struct TensorSpec {
  std::string name;
  std::vector<int> shape;
  std::size_t offset = 0;
  std::size_t size = 0;
};

struct ParamRegistry {
  std::vector<TensorSpec> tensors;
  std::size_t total = 0;

  std::size_t add(const std::string& name, std::vector<int> shape);
  const TensorSpec* find(const std::string& name) const;
};

// Layer descriptors hold shapes plus offsets into the registry; the math
// below is stateless so one model can run on many images concurrently.

struct Conv2d {
  int in_c = 0, out_c = 0, k = 3, stride = 1, pad = 1;
  std::size_t w_off = 0;  // [out_c][in_c][k][k], no bias (a norm follows)
};

struct GroupNorm {
  int channels = 0, groups = 1;
  float eps = 1e-5f;
  std::size_t gamma_off = 0, beta_off = 0;
};

struct Linear {
  int in_dim = 0, out_dim = 0;
  std::size_t w_off = 0, b_off = 0;  // w: [out_dim][in_dim]
};

int conv_out_extent(int in, int k, int stride, int pad);

void conv2d_forward(const Conv2d& L, const float* theta, const FeatureMap& x,
                    FeatureMap& y);
// dx may be null when the input gradient is not needed (stem layer).
void conv2d_backward(const Conv2d& L, const float* theta, const FeatureMap& x,
                     const FeatureMap& dy, FeatureMap* dx, float* grad);

struct GnSaved {
  FeatureMap xhat;
  std::vector<float> inv_std;  // per group
};

void groupnorm_forward(const GroupNorm& L, const float* theta,
                       const FeatureMap& x, FeatureMap& y, GnSaved& saved);
void groupnorm_backward(const GroupNorm& L, const float* theta,
                        const GnSaved& saved, const FeatureMap& dy,
                        FeatureMap& dx, float* grad);

void relu_inplace(FeatureMap& x);
// dy *= (y > 0), where y is the post-activation value.
void relu_backward_inplace(const FeatureMap& y, FeatureMap& dy);

void maxpool3x3s2_forward(const FeatureMap& x, FeatureMap& y,
                          std::vector<std::int32_t>& argmax);
void maxpool3x3s2_backward(const FeatureMap& x_shape_like,
                           const std::vector<std::int32_t>& argmax,
                           const FeatureMap& dy, FeatureMap& dx);

void global_avg_pool(const FeatureMap& x, std::vector<float>& y);
void global_avg_pool_backward(int h, int w, std::span<const float> dy,
                              FeatureMap& dx);

void linear_forward(const Linear& L, const float* theta, const float* x,
                    float* y);
void linear_backward(const Linear& L, const float* theta, const float* x,
                     const float* dy, float* dx, float* grad);

// He-style normal init for conv/linear weights, ones/zeros for norms and
// biases; each tensor draws from its own named stream so init is stable
// under registry reordering.
void init_params(const ParamRegistry& reg, std::span<float> theta,
                 std::uint64_t seed);

enum class OptimizerKind { adam, sgd };
OptimizerKind parse_optimizer(const std::string& s);
const char* optimizer_name(OptimizerKind k);

struct Optimizer {
  OptimizerKind kind = OptimizerKind::adam;
  double lr = 1e-3;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::vector<float> m, v;
  long t = 0;

  void step(std::span<float> theta, std::span<const float> grad);
};

}  // namespace fundus::nn
