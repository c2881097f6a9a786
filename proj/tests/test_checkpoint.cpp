#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <fstream>

#include "fundus/checkpoint.hpp"
#include "fundus/csv.hpp"
#include "fundus/error.hpp"
#include "fundus/model.hpp"
#include "fundus/pretrain.hpp"
#include "fundus/rng.hpp"
#include "helpers.hpp"

using namespace fundus;
using namespace fundus::ssl;

namespace {

Checkpoint sample_checkpoint(std::uint64_t seed) {
  nn::ParamRegistry reg;
  nn::EncoderConfig cfg;
  cfg.stages = {{1, 8}};
  cfg.embedding_dim = 4;
  cfg.input_size = 16;
  nn::EncoderNet enc(cfg, reg);
  std::vector<float> theta(reg.total);
  nn::init_params(reg, theta, seed);
  Checkpoint ckpt = snapshot_params(reg, theta);
  ckpt.config_digest = "abc123";
  ckpt.epoch = 17;
  ckpt.final_loss = 1.25;
  ckpt.seed = seed;
  ckpt.extra_json = R"({"encoder":)" + encoder_config_json(cfg) + "}";
  return ckpt;
}

}  // namespace

TEST_CASE("checkpoint round trip is bit exact") {
  testutil::TempDir tmp("ckpt");
  const Checkpoint ckpt = sample_checkpoint(42);
  save_checkpoint(ckpt, tmp.file("a.fnck"));
  const Checkpoint back = load_checkpoint(tmp.file("a.fnck"));

  CHECK(back.config_digest == ckpt.config_digest);
  CHECK(back.epoch == ckpt.epoch);
  CHECK(back.final_loss == ckpt.final_loss);
  CHECK(back.seed == ckpt.seed);
  REQUIRE(back.tensors.size() == ckpt.tensors.size());
  for (const auto& [name, tensor] : ckpt.tensors) {
    REQUIRE(back.tensors.count(name) == 1);
    const auto& other = back.tensors.at(name);
    CHECK(other.shape == tensor.shape);
    REQUIRE(other.data.size() == tensor.data.size());
    CHECK(std::memcmp(other.data.data(), tensor.data.data(),
                      tensor.data.size() * sizeof(float)) == 0);
  }

  // Saving the loaded checkpoint reproduces the file byte for byte.
  save_checkpoint(back, tmp.file("b.fnck"));
  CHECK(read_text_file(tmp.file("a.fnck")) == read_text_file(tmp.file("b.fnck")));
}

TEST_CASE("truncated and corrupted files are rejected by digest") {
  testutil::TempDir tmp("ckptbad");
  save_checkpoint(sample_checkpoint(1), tmp.file("c.fnck"));
  std::string bytes = read_text_file(tmp.file("c.fnck"));

  write_text_file(tmp.file("trunc.fnck"), bytes.substr(0, bytes.size() / 2));
  CHECK_THROWS_AS(load_checkpoint(tmp.file("trunc.fnck")), UsageError);

  std::string flipped = bytes;
  flipped[flipped.size() / 3] ^= 0x40;
  write_text_file(tmp.file("flip.fnck"), flipped);
  CHECK_THROWS_AS(load_checkpoint(tmp.file("flip.fnck")), UsageError);

  write_text_file(tmp.file("magic.fnck"), "WRONGMAGIC" + bytes);
  CHECK_THROWS_AS(load_checkpoint(tmp.file("magic.fnck")), UsageError);
}

TEST_CASE("restore audits shapes and names") {
  testutil::TempDir tmp("ckptaudit");
  const Checkpoint ckpt = sample_checkpoint(3);

  // Mismatched encoder config: different width.
  nn::ParamRegistry reg;
  nn::EncoderConfig other;
  other.stages = {{1, 16}};
  other.embedding_dim = 4;
  other.input_size = 16;
  nn::EncoderNet enc(other, reg);
  std::vector<float> theta(reg.total, 0.f);
  try {
    restore_params(ckpt, reg, theta, "encoder.");
    FAIL("expected shape audit to throw");
  } catch (const UsageError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("encoder.stem.conv.w") != std::string::npos);
    CHECK(msg.find("shape mismatch") != std::string::npos);
  }
}

TEST_CASE("restore copies tensors exactly") {
  nn::ParamRegistry reg;
  nn::EncoderConfig cfg;
  cfg.stages = {{1, 8}};
  cfg.embedding_dim = 4;
  cfg.input_size = 16;
  nn::EncoderNet enc(cfg, reg);
  std::vector<float> theta(reg.total);
  nn::init_params(reg, theta, 11);
  const Checkpoint ckpt = snapshot_params(reg, theta);

  std::vector<float> fresh(reg.total, -9.f);
  restore_params(ckpt, reg, fresh, "encoder.");
  for (std::size_t i = 0; i < theta.size(); ++i) CHECK(fresh[i] == theta[i]);
}

TEST_CASE("encoder config json round trip") {
  nn::EncoderConfig cfg = nn::EncoderConfig::resnet50_like();
  cfg.stages = {{2, 8}, {3, 24}};
  cfg.embedding_dim = 64;
  cfg.input_size = 96;
  const auto back = encoder_config_from_json(encoder_config_json(cfg));
  CHECK(back.family == cfg.family);
  CHECK(back.embedding_dim == cfg.embedding_dim);
  CHECK(back.input_size == cfg.input_size);
  REQUIRE(back.stages.size() == cfg.stages.size());
  for (std::size_t i = 0; i < cfg.stages.size(); ++i) {
    CHECK(back.stages[i].blocks == cfg.stages[i].blocks);
    CHECK(back.stages[i].channels == cfg.stages[i].channels);
  }
}
