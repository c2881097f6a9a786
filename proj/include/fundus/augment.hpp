#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "fundus/image.hpp"
#include "fundus/rng.hpp"

namespace fundus::aug {

// Two-view augmentation settings. Regular transforms follow the SimCLR
// recipe; `p_nst` gates style-transfer augmentation per view.
struct AugmentationPolicy {
  double p_hflip = 0.5;
  double rotation_min_deg = -25.0;
  double rotation_max_deg = 25.0;
  double jitter_brightness = 0.4;
  double jitter_contrast = 0.4;
  double jitter_saturation = 0.4;
  double crop_scale_min = 0.6;  // area fraction
  double crop_scale_max = 1.0;
  double p_blur = 0.5;
  double blur_sigma_min = 0.1;
  double blur_sigma_max = 2.0;
  double p_nst = 0.7;
  double nst_alpha = 1.0;
  double nst_epsilon = 1e-5;
  int out_size = 224;

  void validate() const;
  // Everything off: identity up to the resize to out_size.
  static AugmentationPolicy disabled(int out_size);
};

// Pixel codec used by style transfer. The default identity codec treats the
// RGB planes themselves as the feature space (tolerance 0); a learned
// encoder/decoder can slot in behind the same interface.
struct FeatureCodec {
  virtual ~FeatureCodec() = default;
  virtual FeatureMap encode(const Image& img) const = 0;
  virtual Image decode(const FeatureMap& fm) const = 0;
  virtual double tolerance() const = 0;
};

struct IdentityCodec final : FeatureCodec {
  FeatureMap encode(const Image& img) const override;
  Image decode(const FeatureMap& fm) const override;
  double tolerance() const override { return 0.0; }
};

const FeatureCodec& identity_codec();

struct StyleBank {
  std::vector<Image> styles;
};

// Loads every PNG/JPEG in a directory, sorted by filename.
StyleBank load_style_bank(const std::string& dir);

struct ChannelStats {
  double mu = 0.0;
  double sigma = 0.0;  // population standard deviation
};

std::vector<ChannelStats> channel_stats(const FeatureMap& fm);

// Per channel: sigma_style * (x - mu_content) / (sigma_content + epsilon)
// + mu_style. A zero-spread channel collapses to mu_style.
FeatureMap adain(const FeatureMap& content, const FeatureMap& style,
                 double epsilon);

// decode(alpha * adain(f(img), f(style)) + (1 - alpha) * f(img)), clamped.
Image nst_augment(const Image& img, const Image& style, double alpha,
                  const FeatureCodec& codec, double epsilon = 1e-5);

// Crop-resize, flip, rotate, color jitter, blur — in that order.
Image apply_regular(const Image& img, const AugmentationPolicy& policy,
                    Rng& rng);

// Two independently augmented views; each applies style transfer with
// probability p_nst before the regular transforms.
std::pair<Image, Image> make_view_pair(const Image& img,
                                       const AugmentationPolicy& policy,
                                       const StyleBank& bank, Rng& rng,
                                       const FeatureCodec& codec = identity_codec());

}  // namespace fundus::aug
