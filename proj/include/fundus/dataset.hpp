#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "fundus/image.hpp"
#include "fundus/manifest.hpp"

namespace fundus {

// Decoded-image access for a manifest, with an in-memory cache when the
// dataset fits the budget. get() is safe to call from multiple threads once
// preload() ran; lazy mode is single-thread only.
class ImageStore {
 public:
  ImageStore(const data::DatasetManifest& manifest, std::string base_dir,
             std::size_t cache_budget_bytes = std::size_t{512} << 20);

  std::size_t size() const { return records_.size(); }
  const data::FundusRecord& record(std::size_t i) const { return *records_[i]; }
  bool referable(std::size_t i) const;
  Image get(std::size_t i) const;

 private:
  std::vector<const data::FundusRecord*> records_;
  std::vector<std::string> paths_;
  std::vector<Image> cache_;
  bool cached_ = false;
};

// Runs fn(chunk, begin, end) over [0, n) split into a fixed number of
// chunks (at most 8, independent of the worker count) so floating-point
// reductions keyed by chunk index do not depend on `jobs`.
inline constexpr int kReduceChunks = 8;
void parallel_chunks(std::size_t n, int jobs,
                     const std::function<void(int, std::size_t, std::size_t)>& fn);

}  // namespace fundus
