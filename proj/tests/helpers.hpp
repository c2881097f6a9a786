#pragma once

#include <filesystem>
#include <string>

#include "fundus/image.hpp"
#include "fundus/manifest.hpp"
#include "fundus/rng.hpp"

namespace testutil {

// Unique scratch directory under the system temp dir, removed on scope exit.
struct TempDir {
  std::filesystem::path path;

  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() /
           ("fundus_test_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }

  std::string file(const std::string& name) const {
    return (path / name).string();
  }
};

inline fundus::Image random_image(fundus::Rng& rng, int h, int w) {
  fundus::Image img(h, w);
  for (auto& v : img.data) v = static_cast<float>(rng.uniform());
  return img;
}

inline fundus::FeatureMap random_feature_map(fundus::Rng& rng, int c, int h,
                                             int w) {
  fundus::FeatureMap fm(c, h, w);
  for (auto& v : fm.data) v = static_cast<float>(rng.uniform(-1.0, 2.0));
  return fm;
}

// n records, two eyes per patient, 'referable_every'-th patient referable.
inline fundus::data::DatasetManifest synthetic_manifest(int n,
                                                        int referable_every = 2) {
  fundus::data::DatasetManifest m;
  for (int i = 0; i < n; ++i) {
    fundus::data::FundusRecord r;
    r.image_id = "img" + std::to_string(i);
    r.image_uri = "img" + std::to_string(i) + ".png";
    r.patient_id = "p" + std::to_string(i / 2);
    r.eye = (i % 2 == 0) ? fundus::data::Eye::od : fundus::data::Eye::os;
    const bool ref = ((i / 2) % referable_every) == 0;
    r.grade = fundus::data::DRGrade{ref ? 3 : 0};
    m.records.push_back(r);
  }
  return m;
}

}  // namespace testutil
