#pragma once

#include <cstdint>
#include <string>

#include "fundus/image.hpp"
#include "fundus/manifest.hpp"
#include "fundus/rng.hpp"

namespace fundus::synth {

// Two-class fixture: the class is carried by the global shape (ellipse vs
// rectangle, area-matched); texture, colors, placement, and rotation are
// nuisance. Patients own two images (OD/OS) of the same class.
struct SynthOptions {
  int n = 200;          // images; must be >= 4
  int image_size = 64;
  int n_styles = 16;    // texture-only style images; 0 skips the styles dir
  std::string id_prefix;
};

// Writes out_dir/img/*.png, out_dir/manifest.csv and (when n_styles > 0)
// out_dir/styles/*.png; returns the manifest (uris relative to out_dir).
data::DatasetManifest generate_dataset(const std::string& out_dir,
                                       const SynthOptions& opt,
                                       std::uint64_t seed);

Image make_texture_image(Rng& rng, int size);

}  // namespace fundus::synth
