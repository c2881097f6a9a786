#include "fundus/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>

#include "fundus/error.hpp"
#include "fundus/image_io.hpp"

namespace fundus::synth {

namespace {

struct Rgb {
  double r, g, b;
};

double luma(const Rgb& c) { return 0.299 * c.r + 0.587 * c.g + 0.114 * c.b; }

Rgb random_color(Rng& rng) {
  return {rng.uniform(0.05, 0.95), rng.uniform(0.05, 0.95),
          rng.uniform(0.05, 0.95)};
}

// Two colors with enough luma contrast to make the texture dominate.
std::pair<Rgb, Rgb> color_pair(Rng& rng) {
  Rgb a = random_color(rng), b = random_color(rng);
  for (int tries = 0; tries < 12 && std::abs(luma(a) - luma(b)) < 0.25; ++tries)
    b = random_color(rng);
  return {a, b};
}

double smoothstep(double t) {
  t = std::clamp(t, 0.0, 1.0);
  return t * t * (3.0 - 2.0 * t);
}

// Scalar field in [0,1] for one pixel; parameters drawn once per texture.
struct Texture {
  int kind = 0;
  Rgb c1{0.5, 0.5, 0.5}, c2{0.5, 0.5, 0.5};
  double dir_x = 1.0, dir_y = 0.0;
  double freq = 4.0, phase = 0.0, sharp = 0.15;
  double cell = 8.0, off_x = 0.0, off_y = 0.0;
  int grid = 4;
  std::vector<double> noise;  // grid x grid node values
  double speckle_amp = 0.3;
  std::vector<double> speckle;  // per-pixel, filled lazily by make()

  static Texture make(Rng& rng, int size) {
    Texture t;
    t.kind = static_cast<int>(rng.uniform_int(0, 4));
    std::tie(t.c1, t.c2) = color_pair(rng);
    const double angle = rng.uniform(0.0, std::numbers::pi);
    t.dir_x = std::cos(angle);
    t.dir_y = std::sin(angle);
    t.freq = rng.uniform(2.0, std::max(3.0, size / 6.0));
    t.phase = rng.uniform(0.0, 1.0);
    t.sharp = rng.uniform(0.05, 0.25);
    t.cell = rng.uniform(size / 8.0, size / 3.0);
    t.off_x = rng.uniform(0.0, t.cell);
    t.off_y = rng.uniform(0.0, t.cell);
    t.grid = static_cast<int>(rng.uniform_int(3, 6));
    t.noise.resize(static_cast<std::size_t>(t.grid) * t.grid);
    for (auto& v : t.noise) v = rng.uniform();
    t.speckle_amp = rng.uniform(0.15, 0.45);
    if (t.kind == 4) {
      t.speckle.resize(static_cast<std::size_t>(size) * size);
      for (auto& v : t.speckle) v = rng.uniform();
    }
    return t;
  }

  double field(double x, double y, int size) const {
    switch (kind) {
      case 0: {  // stripes
        const double s = (x * dir_x + y * dir_y) / size;
        const double w = 0.5 + 0.5 * std::sin(2.0 * std::numbers::pi *
                                              (freq * s + phase));
        return smoothstep((w - 0.5 + sharp) / (2.0 * sharp));
      }
      case 1: {  // checkerboard
        const int cx = static_cast<int>(std::floor((x + off_x) / cell));
        const int cy = static_cast<int>(std::floor((y + off_y) / cell));
        return ((cx + cy) & 1) ? 1.0 : 0.0;
      }
      case 2: {  // value noise, bilinear between grid nodes
        const double gx = x / (size - 1.0) * (grid - 1);
        const double gy = y / (size - 1.0) * (grid - 1);
        const int x0 = std::min(static_cast<int>(gx), grid - 2);
        const int y0 = std::min(static_cast<int>(gy), grid - 2);
        const double fx = gx - x0, fy = gy - y0;
        auto at = [&](int yy, int xx) {
          return noise[static_cast<std::size_t>(yy) * grid + xx];
        };
        const double top = at(y0, x0) * (1 - fx) + at(y0, x0 + 1) * fx;
        const double bot = at(y0 + 1, x0) * (1 - fx) + at(y0 + 1, x0 + 1) * fx;
        return top * (1 - fy) + bot * fy;
      }
      case 3: {  // linear gradient
        const double s = (x * dir_x + y * dir_y) / size;
        return std::clamp(0.5 + s * 0.9, 0.0, 1.0);
      }
      default: {  // speckle
        return speckle_amp * speckle[static_cast<std::size_t>(y) * size +
                                     static_cast<std::size_t>(x)];
      }
    }
  }

  Rgb color_at(double x, double y, int size) const {
    const double t = field(x, y, size);
    return {c1.r + (c2.r - c1.r) * t, c1.g + (c2.g - c1.g) * t,
            c1.b + (c2.b - c1.b) * t};
  }
};

}  // namespace

Image make_texture_image(Rng& rng, int size) {
  const Texture tex = Texture::make(rng, size);
  Image img(size, size);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const Rgb c = tex.color_at(x, y, size);
      img.at(y, x, 0) = static_cast<float>(std::clamp(c.r, 0.0, 1.0));
      img.at(y, x, 1) = static_cast<float>(std::clamp(c.g, 0.0, 1.0));
      img.at(y, x, 2) = static_cast<float>(std::clamp(c.b, 0.0, 1.0));
    }
  return img;
}

namespace {

Image make_sample(Rng& rng, int size, bool ellipse) {
  const Texture background = Texture::make(rng, size);
  // The shape must stay visible under any texture pairing: resample the
  // fill until its tonal level clears the background by a margin. The
  // contrast direction stays random, so intensity alone carries no class
  // signal.
  const double bg_level = (luma(background.c1) + luma(background.c2)) / 2.0;
  Texture fill = Texture::make(rng, size);
  for (int tries = 0; tries < 24; ++tries) {
    const double fill_level = (luma(fill.c1) + luma(fill.c2)) / 2.0;
    if (std::abs(fill_level - bg_level) >= 0.28) break;
    fill = Texture::make(rng, size);
  }

  const double cx = rng.uniform(0.40, 0.60) * size;
  const double cy = rng.uniform(0.40, 0.60) * size;
  double a = rng.uniform(0.20, 0.34) * size;
  double b = rng.uniform(0.20, 0.34) * size;
  if (!ellipse) {
    // Match rectangle area to the ellipse distribution (pi*a*b == 4*a'*b').
    const double k = std::sqrt(std::numbers::pi) / 2.0;
    a *= k;
    b *= k;
  }
  const double phi = rng.uniform(0.0, std::numbers::pi);
  const double cphi = std::cos(phi), sphi = std::sin(phi);
  const double edge_px = 1.2;

  Image img(size, size);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const double dx = x - cx, dy = y - cy;
      const double u = (dx * cphi + dy * sphi) / a;
      const double v = (-dx * sphi + dy * cphi) / b;
      const double d = ellipse ? std::sqrt(u * u + v * v)
                               : std::max(std::abs(u), std::abs(v));
      const double soft = edge_px / std::min(a, b);
      const double alpha = smoothstep((1.0 - d) / soft + 0.5);
      const Rgb bg = background.color_at(x, y, size);
      const Rgb fg = fill.color_at(x, y, size);
      img.at(y, x, 0) = static_cast<float>(
          std::clamp(bg.r + (fg.r - bg.r) * alpha, 0.0, 1.0));
      img.at(y, x, 1) = static_cast<float>(
          std::clamp(bg.g + (fg.g - bg.g) * alpha, 0.0, 1.0));
      img.at(y, x, 2) = static_cast<float>(
          std::clamp(bg.b + (fg.b - bg.b) * alpha, 0.0, 1.0));
    }
  }
  return img;
}

std::string zero_pad(int v, int width) {
  std::string s = std::to_string(v);
  while (static_cast<int>(s.size()) < width) s.insert(s.begin(), '0');
  return s;
}

}  // namespace

data::DatasetManifest generate_dataset(const std::string& out_dir,
                                       const SynthOptions& opt,
                                       std::uint64_t seed) {
  require_input(opt.n >= 4, "synth: n must be >= 4");
  require_input(opt.image_size >= 8, "synth: image size must be >= 8");
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(out_dir) / "img");

  data::DatasetManifest manifest;
  for (int i = 0; i < opt.n; ++i) {
    const int patient = i / 2;
    const bool referable = (patient % 2) == 1;  // class rides on the patient
    Rng rng = Rng::stream(seed, "synth/img/" + std::to_string(i));
    const Image img = make_sample(rng, opt.image_size, referable);

    data::FundusRecord rec;
    rec.image_id = opt.id_prefix + "img" + zero_pad(i, 5);
    rec.image_uri = "img/" + rec.image_id + ".png";
    rec.patient_id = opt.id_prefix + "p" + zero_pad(patient, 4);
    rec.eye = (i % 2 == 0) ? data::Eye::od : data::Eye::os;
    const int grade = referable ? static_cast<int>(rng.uniform_int(2, 4))
                                : static_cast<int>(rng.uniform_int(0, 1));
    rec.grade = data::DRGrade::checked(grade);
    ingest::save_png((fs::path(out_dir) / rec.image_uri).string(), img);
    manifest.records.push_back(std::move(rec));
  }
  write_manifest_csv((fs::path(out_dir) / "manifest.csv").string(), manifest);

  if (opt.n_styles > 0) {
    fs::create_directories(fs::path(out_dir) / "styles");
    for (int i = 0; i < opt.n_styles; ++i) {
      Rng rng = Rng::stream(seed, "synth/style/" + std::to_string(i));
      const Image img = make_texture_image(rng, opt.image_size);
      ingest::save_png(
          (fs::path(out_dir) / "styles" / ("style" + zero_pad(i, 3) + ".png"))
              .string(),
          img);
    }
  }
  return manifest;
}

}  // namespace fundus::synth
