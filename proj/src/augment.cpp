#include "fundus/augment.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>

#include "fundus/error.hpp"
#include "fundus/image_io.hpp"
#include "fundus/quality.hpp"

namespace fundus::aug {

void AugmentationPolicy::validate() const {
  auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
  require_input(prob(p_hflip) && prob(p_blur) && prob(p_nst) && prob(nst_alpha),
                "augment: probabilities must lie in [0,1]");
  require_input(rotation_min_deg <= rotation_max_deg,
                "augment: rotation range out of order");
  require_input(crop_scale_min > 0.0 && crop_scale_min <= crop_scale_max &&
                    crop_scale_max <= 1.0,
                "augment: crop scale range must satisfy 0 < min <= max <= 1");
  require_input(blur_sigma_min > 0.0 && blur_sigma_min <= blur_sigma_max,
                "augment: blur sigma range out of order");
  require_input(jitter_brightness >= 0.0 && jitter_contrast >= 0.0 &&
                    jitter_saturation >= 0.0,
                "augment: jitter deltas must be >= 0");
  require_input(nst_epsilon >= 0.0, "augment: epsilon must be >= 0");
  require_input(out_size >= 8, "augment: out_size must be >= 8");
}

AugmentationPolicy AugmentationPolicy::disabled(int out_size_) {
  AugmentationPolicy p;
  p.p_hflip = 0.0;
  p.rotation_min_deg = p.rotation_max_deg = 0.0;
  p.jitter_brightness = p.jitter_contrast = p.jitter_saturation = 0.0;
  p.crop_scale_min = p.crop_scale_max = 1.0;
  p.p_blur = 0.0;
  p.p_nst = 0.0;
  p.out_size = out_size_;
  return p;
}

FeatureMap IdentityCodec::encode(const Image& img) const {
  return image_to_chw(img);
}

Image IdentityCodec::decode(const FeatureMap& fm) const {
  require_input(fm.channels == 3, "identity codec: expected 3 channels");
  return chw_to_image(fm);
}

const FeatureCodec& identity_codec() {
  static const IdentityCodec codec;
  return codec;
}

StyleBank load_style_bank(const std::string& dir) {
  namespace fs = std::filesystem;
  require_input(fs::is_directory(dir), "style bank: not a directory: " + dir);
  std::vector<std::string> paths;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png" || ext == ".jpg" || ext == ".jpeg")
      paths.push_back(entry.path().string());
  }
  std::sort(paths.begin(), paths.end());
  require_input(!paths.empty(), "style bank: no PNG/JPEG files in " + dir);
  StyleBank bank;
  for (const auto& p : paths) bank.styles.push_back(ingest::load_image(p));
  return bank;
}

std::vector<ChannelStats> channel_stats(const FeatureMap& fm) {
  require_input(fm.channels > 0 && fm.plane_size() > 0,
                "channel_stats: empty feature map");
  std::vector<ChannelStats> stats(static_cast<std::size_t>(fm.channels));
  const std::size_t n = fm.plane_size();
  for (int c = 0; c < fm.channels; ++c) {
    const float* p = fm.channel(c);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum += p[i];
    const double mu = sum / static_cast<double>(n);
    double sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = p[i] - mu;
      sq += d * d;
    }
    stats[static_cast<std::size_t>(c)] = {
        mu, std::sqrt(sq / static_cast<double>(n))};
  }
  return stats;
}

FeatureMap adain(const FeatureMap& content, const FeatureMap& style,
                 double epsilon) {
  require_input(content.channels == style.channels,
                "adain: channel count mismatch (" +
                    std::to_string(content.channels) + " vs " +
                    std::to_string(style.channels) + ")");
  require_input(epsilon >= 0.0, "adain: epsilon must be >= 0");
  const auto cs = channel_stats(content);
  const auto ss = channel_stats(style);

  FeatureMap out(content.channels, content.height, content.width);
  const std::size_t n = content.plane_size();
  for (int c = 0; c < content.channels; ++c) {
    const float* src = content.channel(c);
    float* dst = out.channel(c);
    const double denom = cs[static_cast<std::size_t>(c)].sigma + epsilon;
    const double mu_c = cs[static_cast<std::size_t>(c)].mu;
    const double mu_s = ss[static_cast<std::size_t>(c)].mu;
    const double sigma_s = ss[static_cast<std::size_t>(c)].sigma;
    if (denom <= 0.0) {
      for (std::size_t i = 0; i < n; ++i) dst[i] = static_cast<float>(mu_s);
      continue;
    }
    const double scale = sigma_s / denom;
    for (std::size_t i = 0; i < n; ++i)
      dst[i] = static_cast<float>(scale * (src[i] - mu_c) + mu_s);
  }
  return out;
}

Image nst_augment(const Image& img, const Image& style, double alpha,
                  const FeatureCodec& codec, double epsilon) {
  require_input(alpha >= 0.0 && alpha <= 1.0, "nst: alpha must be in [0,1]");
  FeatureMap content = codec.encode(img);
  if (alpha > 0.0) {
    const FeatureMap styled = adain(content, codec.encode(style), epsilon);
    if (alpha == 1.0) {
      content = styled;
    } else {
      for (std::size_t i = 0; i < content.data.size(); ++i)
        content.data[i] = static_cast<float>(
            alpha * styled.data[i] + (1.0 - alpha) * content.data[i]);
    }
  }
  Image out = codec.decode(content);
  for (auto& v : out.data) v = v < 0.f ? 0.f : (v > 1.f ? 1.f : v);
  return out;
}

namespace {

// Mirror a continuous coordinate into [0, n-1].
double reflect_coord(double t, int n) {
  if (n <= 1) return 0.0;
  const double period = 2.0 * (n - 1);
  t = std::fmod(t, period);
  if (t < 0) t += period;
  return t <= n - 1 ? t : period - t;
}

float sample_bilinear_reflect(const Image& img, double y, double x, int c) {
  const double ry = reflect_coord(y, img.height);
  const double rx = reflect_coord(x, img.width);
  const int y0 = std::min(static_cast<int>(ry), img.height - 1);
  const int x0 = std::min(static_cast<int>(rx), img.width - 1);
  const int y1 = std::min(y0 + 1, img.height - 1);
  const int x1 = std::min(x0 + 1, img.width - 1);
  const float wy = static_cast<float>(ry - y0);
  const float wx = static_cast<float>(rx - x0);
  const float top = img.at(y0, x0, c) * (1.f - wx) + img.at(y0, x1, c) * wx;
  const float bot = img.at(y1, x0, c) * (1.f - wx) + img.at(y1, x1, c) * wx;
  return top * (1.f - wy) + bot * wy;
}

Image crop_resize(const Image& img, double area_scale, Rng& rng, int out_size) {
  const double side = std::sqrt(area_scale);
  int ch = std::max(1, static_cast<int>(std::lround(img.height * side)));
  int cw = std::max(1, static_cast<int>(std::lround(img.width * side)));
  ch = std::min(ch, img.height);
  cw = std::min(cw, img.width);
  const int top = static_cast<int>(rng.uniform_int(0, img.height - ch));
  const int left = static_cast<int>(rng.uniform_int(0, img.width - cw));
  if (ch == img.height && cw == img.width)
    return ingest::resize(img, out_size, out_size);
  Image crop(ch, cw);
  for (int y = 0; y < ch; ++y)
    for (int x = 0; x < cw; ++x)
      for (int c = 0; c < 3; ++c) crop.at(y, x, c) = img.at(top + y, left + x, c);
  return ingest::resize(crop, out_size, out_size);
}

void hflip_inplace(Image& img) {
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width / 2; ++x)
      for (int c = 0; c < 3; ++c)
        std::swap(img.at(y, x, c), img.at(y, img.width - 1 - x, c));
}

Image rotate_bilinear(const Image& img, double angle_deg) {
  const double rad = angle_deg * std::numbers::pi / 180.0;
  const double cs = std::cos(rad), sn = std::sin(rad);
  const double cy = (img.height - 1) / 2.0;
  const double cx = (img.width - 1) / 2.0;
  Image out(img.height, img.width);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      // Inverse map: rotate the output grid back into the source.
      const double dy = y - cy, dx = x - cx;
      const double sy = cy + dy * cs - dx * sn;
      const double sx = cx + dy * sn + dx * cs;
      for (int c = 0; c < 3; ++c)
        out.at(y, x, c) = sample_bilinear_reflect(img, sy, sx, c);
    }
  }
  return out;
}

void clamp01(Image& img) {
  for (auto& v : img.data) v = v < 0.f ? 0.f : (v > 1.f ? 1.f : v);
}

void color_jitter(Image& img, double brightness, double contrast,
                  double saturation) {
  if (brightness != 1.0) {
    for (auto& v : img.data)
      v = static_cast<float>(std::clamp(v * brightness, 0.0, 1.0));
  }
  if (contrast != 1.0) {
    const auto lum = ingest::luminance(img);
    double mean = 0.0;
    for (const double v : lum) mean += v;
    mean /= static_cast<double>(lum.size());
    for (auto& v : img.data)
      v = static_cast<float>(std::clamp(mean + (v - mean) * contrast, 0.0, 1.0));
  }
  if (saturation != 1.0) {
    for (std::size_t i = 0; i < img.pixel_count(); ++i) {
      float* px = img.data.data() + i * 3;
      const double g = 0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2];
      for (int c = 0; c < 3; ++c)
        px[c] = static_cast<float>(std::clamp(g + (px[c] - g) * saturation, 0.0, 1.0));
    }
  }
}

void gaussian_blur(Image& img, double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  double ksum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double v = std::exp(-0.5 * (i * i) / (sigma * sigma));
    kernel[static_cast<std::size_t>(i + radius)] = v;
    ksum += v;
  }
  for (auto& v : kernel) v /= ksum;

  Image tmp(img.height, img.width);
  for (int y = 0; y < img.height; ++y) {          // horizontal pass
    for (int x = 0; x < img.width; ++x) {
      double acc[3] = {0, 0, 0};
      for (int i = -radius; i <= radius; ++i) {
        const int sx = static_cast<int>(reflect_coord(x + i, img.width));
        const double k = kernel[static_cast<std::size_t>(i + radius)];
        for (int c = 0; c < 3; ++c) acc[c] += k * img.at(y, sx, c);
      }
      for (int c = 0; c < 3; ++c) tmp.at(y, x, c) = static_cast<float>(acc[c]);
    }
  }
  for (int y = 0; y < img.height; ++y) {          // vertical pass
    for (int x = 0; x < img.width; ++x) {
      double acc[3] = {0, 0, 0};
      for (int i = -radius; i <= radius; ++i) {
        const int sy = static_cast<int>(reflect_coord(y + i, img.height));
        const double k = kernel[static_cast<std::size_t>(i + radius)];
        for (int c = 0; c < 3; ++c) acc[c] += k * tmp.at(sy, x, c);
      }
      for (int c = 0; c < 3; ++c)
        img.at(y, x, c) = static_cast<float>(std::clamp(acc[c], 0.0, 1.0));
    }
  }
}

}  // namespace

Image apply_regular(const Image& img, const AugmentationPolicy& policy,
                    Rng& rng) {
  policy.validate();
  const double area = rng.uniform(policy.crop_scale_min, policy.crop_scale_max);
  Image out = crop_resize(img, area, rng, policy.out_size);

  if (rng.uniform() < policy.p_hflip) hflip_inplace(out);

  const double angle =
      rng.uniform(policy.rotation_min_deg, policy.rotation_max_deg);
  if (angle != 0.0) out = rotate_bilinear(out, angle);

  const double b = rng.uniform(1.0 - policy.jitter_brightness,
                               1.0 + policy.jitter_brightness);
  const double c = rng.uniform(1.0 - policy.jitter_contrast,
                               1.0 + policy.jitter_contrast);
  const double s = rng.uniform(1.0 - policy.jitter_saturation,
                               1.0 + policy.jitter_saturation);
  color_jitter(out, b, c, s);

  if (rng.uniform() < policy.p_blur) {
    const double sigma = rng.uniform(policy.blur_sigma_min, policy.blur_sigma_max);
    gaussian_blur(out, sigma);
  }
  clamp01(out);
  return out;
}

std::pair<Image, Image> make_view_pair(const Image& img,
                                       const AugmentationPolicy& policy,
                                       const StyleBank& bank, Rng& rng,
                                       const FeatureCodec& codec) {
  policy.validate();
  require_input(policy.p_nst == 0.0 || !bank.styles.empty(),
                "make_view_pair: empty style bank with p_nst > 0");
  auto one_view = [&]() -> Image {
    if (rng.uniform() < policy.p_nst) {
      const auto idx = static_cast<std::size_t>(
          rng.uniform_int(0, static_cast<std::int64_t>(bank.styles.size()) - 1));
      const Image styled = nst_augment(img, bank.styles[idx], policy.nst_alpha,
                                       codec, policy.nst_epsilon);
      return apply_regular(styled, policy, rng);
    }
    return apply_regular(img, policy, rng);
  };
  Image first = one_view();
  Image second = one_view();
  return {std::move(first), std::move(second)};
}

}  // namespace fundus::aug
