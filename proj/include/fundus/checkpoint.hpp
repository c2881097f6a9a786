#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fundus/nn.hpp"

namespace fundus::ssl {

struct NamedTensor {
  std::vector<int> shape;
  std::vector<float> data;
};

// Binary container: 8-byte magic, u64 length-prefixed JSON metadata, named
// tensor blocks (u32 name length, name, u32 rank, u32 dims, f32 LE payload),
// and a trailing 64-bit FNV-1a digest over everything before it.
struct Checkpoint {
  std::map<std::string, NamedTensor> tensors;
  std::string config_digest;
  int epoch = 0;
  double final_loss = 0.0;
  std::uint64_t seed = 0;
  // Extra metadata carried verbatim (JSON object source), e.g. encoder
  // config or the validation operating threshold.
  std::string extra_json = "{}";
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// Copies every registry tensor out of / into a flat parameter vector.
Checkpoint snapshot_params(const nn::ParamRegistry& reg,
                           std::span<const float> theta);
// Loads tensors whose names carry `prefix`; missing or shape-mismatched
// tensors raise an error naming each offender.
void restore_params(const Checkpoint& ckpt, const nn::ParamRegistry& reg,
                    std::span<float> theta, const std::string& prefix);

}  // namespace fundus::ssl
