#include "fundus/dataset.hpp"

#include <atomic>
#include <thread>

#include "fundus/error.hpp"
#include "fundus/image_io.hpp"
#include "fundus/quality.hpp"

namespace fundus {

ImageStore::ImageStore(const data::DatasetManifest& manifest,
                       std::string base_dir, std::size_t cache_budget_bytes) {
  for (const auto& r : manifest.records) {
    records_.push_back(&r);
    paths_.push_back(ingest::resolve_uri(base_dir, r.image_uri));
  }
  if (records_.empty()) return;
  // Probe the first image to estimate the footprint.
  const Image probe = ingest::load_image(paths_[0]);
  const std::size_t bytes_per =
      probe.data.size() * sizeof(float) + sizeof(Image);
  if (bytes_per * records_.size() <= cache_budget_bytes) {
    cache_.reserve(records_.size());
    cache_.push_back(probe);
    for (std::size_t i = 1; i < records_.size(); ++i)
      cache_.push_back(ingest::load_image(paths_[i]));
    cached_ = true;
  }
}

bool ImageStore::referable(std::size_t i) const {
  return data::grade_to_referable(records_[i]->grade);
}

Image ImageStore::get(std::size_t i) const {
  require(i < records_.size(), "image store: index out of range");
  if (cached_) return cache_[i];
  return ingest::load_image(paths_[i]);
}

void parallel_chunks(std::size_t n, int jobs,
                     const std::function<void(int, std::size_t, std::size_t)>& fn) {
  if (n == 0) return;
  const int chunks = static_cast<int>(
      std::min<std::size_t>(kReduceChunks, n));
  auto bounds = [&](int c) {
    const std::size_t b = n * static_cast<std::size_t>(c) / chunks;
    const std::size_t e = n * (static_cast<std::size_t>(c) + 1) / chunks;
    return std::pair{b, e};
  };
  if (jobs <= 1) {
    for (int c = 0; c < chunks; ++c) {
      const auto [b, e] = bounds(c);
      fn(c, b, e);
    }
    return;
  }
  std::atomic<int> next{0};
  auto worker = [&] {
    for (;;) {
      const int c = next.fetch_add(1);
      if (c >= chunks) return;
      const auto [b, e] = bounds(c);
      fn(c, b, e);
    }
  };
  const int n_threads = std::min(jobs, chunks);
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(n_threads));
  for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
}

}  // namespace fundus
