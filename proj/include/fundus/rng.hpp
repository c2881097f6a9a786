#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace fundus {

// 64-bit FNV-1a. Also used for checkpoint digests and config digests.
constexpr std::uint64_t kFnvBasis = 14695981039346656037ull;
constexpr std::uint64_t kFnvPrime = 1099511628211ull;

inline std::uint64_t fnv1a64(const void* data, std::size_t n,
                             std::uint64_t h = kFnvBasis) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= kFnvPrime;
  }
  return h;
}

inline std::uint64_t fnv1a64(std::string_view s, std::uint64_t h = kFnvBasis) {
  return fnv1a64(s.data(), s.size(), h);
}

std::string to_hex(std::uint64_t v);

// Deterministic PRNG (xoshiro256++ seeded through splitmix64). Every random
// decision in the pipeline draws from a stream named by a path such as
// "pretrain/epoch/3/img/17", derived from the single root seed, so results
// do not depend on scheduling or evaluation order.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  // Named substream: same (root, path) always yields the same stream.
  static Rng stream(std::uint64_t root_seed, std::string_view path);

  std::uint64_t next_u64();

  // Uniform double in [0, 1).
  double uniform();
  // Uniform double in [a, b).
  double uniform(double a, double b);
  // Uniform integer in [lo, hi], inclusive.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
  // Standard normal via Box-Muller.
  double normal();

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const auto j =
          static_cast<std::size_t>(uniform_int(0, static_cast<std::int64_t>(i) - 1));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t state_[4];
  double spare_normal_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace fundus
