#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>

#include "fundus/error.hpp"
#include "fundus/model.hpp"
#include "fundus/nn.hpp"
#include "fundus/ntxent.hpp"
#include "fundus/rng.hpp"
#include "helpers.hpp"

using namespace fundus;
using namespace fundus::nn;

namespace {

EncoderConfig tiny_encoder(int input = 16) {
  EncoderConfig cfg;
  cfg.stages = {{1, 8}, {1, 16}};
  cfg.embedding_dim = 12;
  cfg.input_size = input;
  return cfg;
}

// Cosine similarity between two float gradient vectors.
double grad_cosine(const std::vector<float>& a, const std::vector<float>& b) {
  double uu = 0, vv = 0, uv = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    uu += static_cast<double>(a[i]) * a[i];
    vv += static_cast<double>(b[i]) * b[i];
    uv += static_cast<double>(a[i]) * b[i];
  }
  return uv / std::max(std::sqrt(uu) * std::sqrt(vv), 1e-30);
}

}  // namespace

TEST_CASE("registry offsets and lookup") {
  ParamRegistry reg;
  const auto a = reg.add("w1", {2, 3});
  const auto b = reg.add("w2", {4});
  CHECK(a == 0);
  CHECK(b == 6);
  CHECK(reg.total == 10);
  CHECK(reg.find("w2")->shape == std::vector<int>{4});
  CHECK(reg.find("nope") == nullptr);
  CHECK_THROWS(reg.add("w1", {1}));
}

// Finite-difference check of the whole encoder + projection composite via a
// scalar probe loss L = sum(c_j * z_j). The probe is evaluated at perturbed
// parameters with double accumulation; cosine and norm-ratio between the
// analytic and numeric gradients must be tight.
TEST_CASE("encoder+projection gradient agrees with finite differences") {
  const auto cfg = tiny_encoder();
  ProjectionHeadConfig head;
  head.hidden_dim = 10;
  head.output_dim = 6;

  ParamRegistry reg;
  EncoderNet enc(cfg, reg);
  ProjectionNet proj(cfg.embedding_dim, head, reg);
  std::vector<float> theta(reg.total);
  init_params(reg, theta, 5);

  Rng rng(71);
  Image img = testutil::random_image(rng, cfg.input_size, cfg.input_size);
  const FeatureMap input = image_to_chw(img);
  std::vector<float> probe(static_cast<std::size_t>(head.output_dim));
  for (auto& v : probe) v = static_cast<float>(rng.uniform(-1, 1));

  auto loss_at = [&](const std::vector<float>& params) {
    const auto h = enc.forward(params.data(), input, nullptr);
    const auto z = proj.forward(params.data(), h, nullptr);
    double l = 0;
    for (std::size_t j = 0; j < z.size(); ++j) l += probe[j] * z[j];
    return l;
  };

  EncoderTape etape;
  ProjectionTape ptape;
  const auto h = enc.forward(theta.data(), input, &etape);
  proj.forward(theta.data(), h, &ptape);
  std::vector<float> analytic(reg.total, 0.f);
  const auto dh = proj.backward(theta.data(), ptape, probe, analytic.data());
  enc.backward(theta.data(), etape, dh, analytic.data());

  // Probe a deterministic subset of parameters across all tensors.
  std::vector<float> numeric(reg.total, 0.f);
  std::vector<std::size_t> picks;
  for (const auto& t : reg.tensors)
    for (std::size_t k = 0; k < t.size; k += std::max<std::size_t>(t.size / 7, 1))
      picks.push_back(t.offset + k);
  const float h_step = 1e-2f;
  std::vector<float> work = theta;
  for (const auto idx : picks) {
    const float keep = work[idx];
    work[idx] = keep + h_step;
    const double up = loss_at(work);
    work[idx] = keep - h_step;
    const double down = loss_at(work);
    work[idx] = keep;
    numeric[idx] = static_cast<float>((up - down) / (2.0 * h_step));
  }
  std::vector<float> a_sub, n_sub;
  for (const auto idx : picks) {
    a_sub.push_back(analytic[idx]);
    n_sub.push_back(numeric[idx]);
  }
  CHECK(grad_cosine(a_sub, n_sub) >= 0.9995);
  double na = 0, nn_ = 0;
  for (std::size_t i = 0; i < a_sub.size(); ++i) {
    na += static_cast<double>(a_sub[i]) * a_sub[i];
    nn_ += static_cast<double>(n_sub[i]) * n_sub[i];
  }
  CHECK(std::sqrt(na) == doctest::Approx(std::sqrt(nn_)).epsilon(2e-2));
}

TEST_CASE("encoder forward is pure and row-consistent") {
  const auto cfg = tiny_encoder();
  ParamRegistry reg;
  EncoderNet enc(cfg, reg);
  std::vector<float> theta(reg.total);
  init_params(reg, theta, 9);

  Rng rng(72);
  const FeatureMap a =
      image_to_chw(testutil::random_image(rng, cfg.input_size, cfg.input_size));
  const auto h1 = enc.forward(theta.data(), a, nullptr);
  const auto h2 = enc.forward(theta.data(), a, nullptr);
  REQUIRE(h1.size() == static_cast<std::size_t>(cfg.embedding_dim));
  for (std::size_t i = 0; i < h1.size(); ++i) CHECK(h1[i] == h2[i]);
  for (const float v : h1) CHECK(std::isfinite(v));
}

TEST_CASE("zero final affine gives all-zero embeddings") {
  const auto cfg = tiny_encoder();
  ParamRegistry reg;
  EncoderNet enc(cfg, reg);
  std::vector<float> theta(reg.total);
  init_params(reg, theta, 10);
  const auto* fc_w = reg.find("encoder.fc.w");
  const auto* fc_b = reg.find("encoder.fc.b");
  std::fill(theta.begin() + static_cast<long>(fc_w->offset),
            theta.begin() + static_cast<long>(fc_w->offset + fc_w->size), 0.f);
  std::fill(theta.begin() + static_cast<long>(fc_b->offset),
            theta.begin() + static_cast<long>(fc_b->offset + fc_b->size), 0.f);

  Rng rng(73);
  const FeatureMap input =
      image_to_chw(testutil::random_image(rng, cfg.input_size, cfg.input_size));
  const auto h = enc.forward(theta.data(), input, nullptr);
  for (const float v : h) CHECK(v == 0.f);
}

TEST_CASE("encoder rejects shape mismatch") {
  const auto cfg = tiny_encoder(16);
  ParamRegistry reg;
  EncoderNet enc(cfg, reg);
  std::vector<float> theta(reg.total);
  init_params(reg, theta, 1);
  Rng rng(74);
  const FeatureMap wrong = image_to_chw(testutil::random_image(rng, 12, 16));
  CHECK_THROWS_AS(enc.forward(theta.data(), wrong, nullptr), UsageError);
}

TEST_CASE("projection head identity composition") {
  ProjectionHeadConfig head;
  head.hidden_dim = 6;
  head.output_dim = 4;
  ParamRegistry reg;
  ProjectionNet proj(6, head, reg);
  std::vector<float> theta(reg.total, 0.f);
  // fc1 = identity 6x6, fc2 = truncated identity 4x6.
  const auto* w1 = reg.find("proj.fc1.w");
  const auto* w2 = reg.find("proj.fc2.w");
  for (int i = 0; i < 6; ++i) theta[w1->offset + static_cast<std::size_t>(i) * 6 + i] = 1.f;
  for (int i = 0; i < 4; ++i) theta[w2->offset + static_cast<std::size_t>(i) * 6 + i] = 1.f;

  const std::vector<float> h = {0.5f, 1.f, 0.f, 2.f, 0.25f, 3.f};  // nonnegative
  const auto z = proj.forward(theta.data(), h, nullptr);
  REQUIRE(z.size() == 4);
  for (int i = 0; i < 4; ++i) CHECK(z[static_cast<std::size_t>(i)] == h[static_cast<std::size_t>(i)]);

  // Zero h passes only the bias path through the rectifier.
  const std::vector<float> zero(6, 0.f);
  const auto zb = proj.forward(theta.data(), zero, nullptr);
  for (const float v : zb) CHECK(v == 0.f);
}

TEST_CASE("projection output permutes with batch order") {
  ProjectionHeadConfig head;
  ParamRegistry reg;
  ProjectionNet proj(8, head, reg);
  std::vector<float> theta(reg.total);
  init_params(reg, theta, 2);
  Rng rng(75);
  std::vector<float> h1(8), h2(8);
  for (auto& v : h1) v = static_cast<float>(rng.normal());
  for (auto& v : h2) v = static_cast<float>(rng.normal());
  const auto za = proj.forward(theta.data(), h1, nullptr);
  const auto zb = proj.forward(theta.data(), h2, nullptr);
  // Row-wise map: computing in the other order changes nothing.
  const auto zb2 = proj.forward(theta.data(), h2, nullptr);
  const auto za2 = proj.forward(theta.data(), h1, nullptr);
  for (std::size_t i = 0; i < za.size(); ++i) {
    CHECK(za[i] == za2[i]);
    CHECK(zb[i] == zb2[i]);
  }
}

TEST_CASE("maxpool forward/backward routes to the argmax") {
  FeatureMap x(1, 4, 4);
  for (int i = 0; i < 16; ++i) x.data[static_cast<std::size_t>(i)] = static_cast<float>(i);
  FeatureMap y;
  std::vector<std::int32_t> argmax;
  maxpool3x3s2_forward(x, y, argmax);
  CHECK(y.height == 2);
  CHECK(y.width == 2);
  CHECK(y.data[3] == 15.f);  // bottom-right window peaks at element 15

  FeatureMap dy(1, 2, 2);
  std::fill(dy.data.begin(), dy.data.end(), 1.f);
  FeatureMap dx;
  maxpool3x3s2_backward(x, argmax, dy, dx);
  const float total = std::accumulate(dx.data.begin(), dx.data.end(), 0.f);
  CHECK(total == 4.f);
  CHECK(dx.data[15] >= 1.f);
}

TEST_CASE("resnet50_like family builds and runs") {
  EncoderConfig cfg = EncoderConfig::resnet50_like();
  cfg.stages = {{1, 8}, {1, 8}};  // keep the test light; stem/maxpool differ
  cfg.embedding_dim = 4;
  cfg.input_size = 32;
  ParamRegistry reg;
  EncoderNet enc(cfg, reg);
  std::vector<float> theta(reg.total);
  init_params(reg, theta, 3);
  Rng rng(76);
  const FeatureMap input = image_to_chw(testutil::random_image(rng, 32, 32));
  EncoderTape tape;
  const auto h = enc.forward(theta.data(), input, &tape);
  CHECK(h.size() == 4);
  std::vector<float> grad(reg.total, 0.f);
  const std::vector<float> dh = {1.f, -1.f, 0.5f, 0.f};
  enc.backward(theta.data(), tape, dh, grad.data());
  double norm = 0;
  for (const float g : grad) norm += static_cast<double>(g) * g;
  CHECK(norm > 0.0);
}

TEST_CASE("adam and sgd steps move parameters deterministically") {
  std::vector<float> theta = {1.f, -2.f, 0.5f};
  const std::vector<float> grad = {0.1f, -0.2f, 0.f};

  Optimizer sgd;
  sgd.kind = OptimizerKind::sgd;
  sgd.lr = 0.5;
  auto t1 = theta;
  sgd.step(t1, grad);
  CHECK(t1[0] == doctest::Approx(0.95f));
  CHECK(t1[1] == doctest::Approx(-1.9f));
  CHECK(t1[2] == 0.5f);

  Optimizer adam;
  adam.lr = 0.1;
  auto t2 = theta;
  auto t3 = theta;
  Optimizer adam2;
  adam2.lr = 0.1;
  adam.step(t2, grad);
  adam2.step(t3, grad);
  for (std::size_t i = 0; i < theta.size(); ++i) CHECK(t2[i] == t3[i]);
  // First Adam step moves each coordinate by about lr in the grad direction.
  CHECK(t2[0] == doctest::Approx(1.f - 0.1f).epsilon(1e-3));
  CHECK(t2[1] == doctest::Approx(-2.f + 0.1f).epsilon(1e-3));
}

TEST_CASE("init_params is stable per tensor name") {
  const auto cfg = tiny_encoder();
  ParamRegistry reg1, reg2;
  EncoderNet e1(cfg, reg1);
  EncoderNet e2(cfg, reg2);
  std::vector<float> t1(reg1.total), t2(reg2.total);
  init_params(reg1, t1, 123);
  init_params(reg2, t2, 123);
  for (std::size_t i = 0; i < t1.size(); ++i) CHECK(t1[i] == t2[i]);

  std::vector<float> t3(reg1.total);
  init_params(reg1, t3, 124);
  bool any_diff = false;
  for (std::size_t i = 0; i < t1.size(); ++i)
    if (t1[i] != t3[i]) any_diff = true;
  CHECK(any_diff);
}

TEST_CASE("training loop decreases contrastive loss on a fixed batch") {
  const auto cfg = tiny_encoder();
  ProjectionHeadConfig head;
  head.hidden_dim = 8;
  head.output_dim = 6;
  ParamRegistry reg;
  EncoderNet enc(cfg, reg);
  ProjectionNet proj(cfg.embedding_dim, head, reg);
  std::vector<float> theta(reg.total);
  init_params(reg, theta, 7);

  Rng rng(77);
  std::vector<FeatureMap> views;
  for (int i = 0; i < 8; ++i)
    views.push_back(
        image_to_chw(testutil::random_image(rng, cfg.input_size, cfg.input_size)));

  Optimizer opt;
  opt.lr = 1e-2;
  double first = 0, last = 0;
  for (int step = 0; step < 30; ++step) {
    std::vector<EncoderTape> etapes(views.size());
    std::vector<ProjectionTape> ptapes(views.size());
    std::vector<double> z;
    for (std::size_t i = 0; i < views.size(); ++i) {
      const auto h = enc.forward(theta.data(), views[i], &etapes[i]);
      const auto zi = proj.forward(theta.data(), h, &ptapes[i]);
      for (const float v : zi) z.push_back(v);
    }
    const auto res = ssl::nt_xent_loss(z, static_cast<int>(views.size()),
                                       head.output_dim, 0.5);
    if (step == 0) first = res.loss;
    last = res.loss;
    std::vector<float> grad(reg.total, 0.f);
    for (std::size_t i = 0; i < views.size(); ++i) {
      std::vector<float> dz(static_cast<std::size_t>(head.output_dim));
      for (int j = 0; j < head.output_dim; ++j)
        dz[static_cast<std::size_t>(j)] = static_cast<float>(
            res.grad[i * static_cast<std::size_t>(head.output_dim) +
                     static_cast<std::size_t>(j)]);
      const auto dh = proj.backward(theta.data(), ptapes[i], dz, grad.data());
      enc.backward(theta.data(), etapes[i], dh, grad.data());
    }
    opt.step(theta, grad);
  }
  CHECK(last < first);
}
