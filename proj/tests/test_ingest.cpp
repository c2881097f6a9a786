#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <png.h>

#include <cmath>
#include <cstdio>

#include "fundus/csv.hpp"
#include "fundus/error.hpp"
#include "fundus/image_io.hpp"
#include "fundus/manifest.hpp"
#include "fundus/quality.hpp"
#include "fundus/rng.hpp"
#include "helpers.hpp"

using namespace fundus;
using namespace fundus::ingest;

namespace {

// Test-only 16-bit RGB PNG writer (the library itself only emits 8-bit).
void write_png16(const std::string& path, int h, int w, std::uint16_t value) {
  std::FILE* fp = std::fopen(path.c_str(), "wb");
  REQUIRE(fp != nullptr);
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  REQUIRE(setjmp(png_jmpbuf(png)) == 0);
  png_init_io(png, fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(w),
               static_cast<png_uint_32>(h), 16, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<std::uint16_t> row(static_cast<std::size_t>(w) * 3);
  for (auto& v : row) {
    v = static_cast<std::uint16_t>((value >> 8) | (value << 8));  // big-endian
  }
  for (int y = 0; y < h; ++y)
    png_write_row(png, reinterpret_cast<png_bytep>(row.data()));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

Image constant_image(int h, int w, float v) {
  Image img(h, w);
  for (auto& x : img.data) x = v;
  return img;
}

// Brute-force oracle: full 3x3 Laplacian convolution over interior pixels,
// then population variance, straight from the definition.
double laplacian_variance_oracle(const Image& img) {
  const int h = img.height, w = img.width;
  std::vector<double> lum(static_cast<std::size_t>(h) * w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      lum[static_cast<std::size_t>(y) * w + x] = 0.299 * img.at(y, x, 0) +
                                                 0.587 * img.at(y, x, 1) +
                                                 0.114 * img.at(y, x, 2);
  const double kernel[3][3] = {{0, 1, 0}, {1, -4, 1}, {0, 1, 0}};
  std::vector<double> responses;
  for (int y = 1; y + 1 < h; ++y) {
    for (int x = 1; x + 1 < w; ++x) {
      double r = 0;
      for (int ky = 0; ky < 3; ++ky)
        for (int kx = 0; kx < 3; ++kx)
          r += kernel[ky][kx] *
               lum[static_cast<std::size_t>(y + ky - 1) * w + (x + kx - 1)];
      responses.push_back(r);
    }
  }
  if (responses.empty()) return 0.0;
  double mean = 0;
  for (const double r : responses) mean += r;
  mean /= static_cast<double>(responses.size());
  double var = 0;
  for (const double r : responses) var += (r - mean) * (r - mean);
  return var / static_cast<double>(responses.size());
}

}  // namespace

TEST_CASE("load_image 8-bit scale anchors") {
  testutil::TempDir tmp("load8");
  Image img = constant_image(8, 8, 0.f);
  img.at(0, 0, 0) = 1.f;  // pixel 255 after quantization
  save_png(tmp.file("a.png"), img);
  const Image back = load_image(tmp.file("a.png"));
  CHECK(back.at(0, 0, 0) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(back.at(0, 0, 1) == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(back.at(1, 1, 2) == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("load_image 16-bit scaling") {
  testutil::TempDir tmp("load16");
  write_png16(tmp.file("b.png"), 8, 8, 32768);
  const Image img = load_image(tmp.file("b.png"));
  CHECK(img.height == 8);
  CHECK(img.width == 8);
  CHECK(img.at(3, 4, 1) ==
        doctest::Approx(32768.0 / 65535.0).epsilon(1e-7));
}

TEST_CASE("load_image error paths") {
  testutil::TempDir tmp("loaderr");
  CHECK_THROWS_AS(load_image(tmp.file("missing.png")), UsageError);
  write_text_file(tmp.file("junk.png"), "not an image at all");
  CHECK_THROWS_AS(load_image(tmp.file("junk.png")), UsageError);
}

TEST_CASE("load_image rejects non-RGB") {
  testutil::TempDir tmp("gray");
  // Grayscale PNG via libpng directly.
  std::FILE* fp = std::fopen(tmp.file("g.png").c_str(), "wb");
  REQUIRE(fp != nullptr);
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  REQUIRE(setjmp(png_jmpbuf(png)) == 0);
  png_init_io(png, fp);
  png_set_IHDR(png, info, 8, 8, 8, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_byte> row(8, 128);
  for (int y = 0; y < 8; ++y) png_write_row(png, row.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
  CHECK_THROWS_AS(load_image(tmp.file("g.png")), UsageError);
}

TEST_CASE("resize identity and constants") {
  Rng rng(4);
  const Image img = testutil::random_image(rng, 24, 24);
  const Image same = resize(img, 24, 24);
  for (std::size_t i = 0; i < img.data.size(); ++i)
    CHECK(same.data[i] == img.data[i]);

  const Image c = constant_image(10, 14, 0.37f);
  const Image up = resize(c, 20, 9 + 1);
  for (const float v : up.data) CHECK(v == doctest::Approx(0.37f).epsilon(1e-6));
}

TEST_CASE("resize 2x2 to 4x4 bilinear weights") {
  Image img(2, 2);
  for (int c = 0; c < 3; ++c) {
    img.at(0, 0, c) = 0.f;
    img.at(0, 1, c) = 1.f;
    img.at(1, 0, c) = 0.f;
    img.at(1, 1, c) = 1.f;
  }
  const Image out = resize(img, 4, 4);
  // Corner alignment: column x samples the source at x/3.
  for (int y = 0; y < 4; ++y) {
    CHECK(out.at(y, 0, 0) == doctest::Approx(0.0));
    CHECK(out.at(y, 1, 0) == doctest::Approx(1.0 / 3.0).epsilon(1e-6));
    CHECK(out.at(y, 2, 1) == doctest::Approx(2.0 / 3.0).epsilon(1e-6));
    CHECK(out.at(y, 3, 2) == doctest::Approx(1.0));
  }
}

TEST_CASE("quality metrics on degenerate inputs") {
  const auto black = quality_metrics(constant_image(16, 16, 0.f));
  CHECK(black.mean_luminance == doctest::Approx(0.0));
  CHECK(black.sharpness == doctest::Approx(0.0));
  CHECK(black.clipped_fraction == doctest::Approx(1.0));

  const auto mid = quality_metrics(constant_image(16, 16, 0.5f));
  CHECK(mid.mean_luminance == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(mid.sharpness == doctest::Approx(0.0));
  CHECK(mid.clipped_fraction == doctest::Approx(0.0));
}

TEST_CASE("checkerboard sharpness matches the brute-force oracle") {
  Image img(12, 12);
  for (int y = 0; y < 12; ++y)
    for (int x = 0; x < 12; ++x)
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = ((x + y) & 1) ? 1.f : 0.f;
  const auto q = quality_metrics(img);
  CHECK(q.sharpness ==
        doctest::Approx(laplacian_variance_oracle(img)).epsilon(1e-12));
  CHECK(q.sharpness > 1.0);  // alternating pattern has huge response
}

TEST_CASE("quality_metrics matches oracle on 20 random images") {
  Rng rng(21);
  for (int t = 0; t < 20; ++t) {
    const int h = 3 + static_cast<int>(rng.uniform_int(0, 13));
    const int w = 3 + static_cast<int>(rng.uniform_int(0, 13));
    const Image img = testutil::random_image(rng, h, w);
    const auto q = quality_metrics(img);
    CHECK(std::abs(q.sharpness - laplacian_variance_oracle(img)) <= 1e-9);

    double lum = 0;
    for (std::size_t i = 0; i < img.pixel_count(); ++i)
      lum += 0.299 * img.data[i * 3] + 0.587 * img.data[i * 3 + 1] +
             0.114 * img.data[i * 3 + 2];
    lum /= static_cast<double>(img.pixel_count());
    CHECK(std::abs(q.mean_luminance - lum) <= 1e-9);
  }
}

TEST_CASE("filter_quality partitions the manifest") {
  testutil::TempDir tmp("filter");
  data::DatasetManifest m;
  auto add = [&](const std::string& id, const Image& img) {
    save_png(tmp.file(id + ".png"), img);
    data::FundusRecord r;
    r.image_id = id;
    r.image_uri = id + ".png";
    r.patient_id = id;
    r.grade = data::DRGrade{0};
    m.records.push_back(r);
  };
  Rng rng(5);
  add("black", constant_image(16, 16, 0.f));
  add("noisy", testutil::random_image(rng, 16, 16));
  add("flat", constant_image(16, 16, 0.5f));
  {  // missing file routes to excluded with reason io
    data::FundusRecord r;
    r.image_id = "ghost";
    r.image_uri = "ghost.png";
    r.patient_id = "ghost";
    r.grade = data::DRGrade{0};
    m.records.push_back(r);
  }

  const auto result = filter_quality(m, {}, tmp.path.string());
  CHECK(result.kept.records.size() + result.excluded.records.size() ==
        m.records.size());
  std::map<std::string, std::string> reason;
  for (const auto& r : result.reasons) reason[r.image_id] = r.reason;
  CHECK(reason["black"] == "luminance");
  CHECK(reason["flat"] == "sharpness");
  CHECK(reason["ghost"] == "io");
  CHECK(reason.count("noisy") == 0);
}

TEST_CASE("filter_quality partition over random thresholds") {
  testutil::TempDir tmp("filter2");
  data::DatasetManifest m;
  Rng rng(6);
  for (int i = 0; i < 6; ++i) {
    const std::string id = "r" + std::to_string(i);
    save_png(tmp.file(id + ".png"), testutil::random_image(rng, 12, 12));
    data::FundusRecord r;
    r.image_id = id;
    r.image_uri = id + ".png";
    r.patient_id = id;
    r.grade = data::DRGrade{0};
    m.records.push_back(r);
  }
  for (int t = 0; t < 10; ++t) {
    QualityThresholds thr;
    thr.min_luminance = rng.uniform(0.0, 1.0);
    thr.min_sharpness = rng.uniform(0.0, 0.2);
    thr.max_clipped = rng.uniform(0.0, 1.0);
    const auto res = filter_quality(m, thr, tmp.path.string());
    CHECK(res.kept.records.size() + res.excluded.records.size() ==
          m.records.size());
    std::set<std::string> seen;
    for (const auto& r : res.kept.records) seen.insert(r.image_id);
    for (const auto& r : res.excluded.records) {
      CHECK(seen.count(r.image_id) == 0);
      seen.insert(r.image_id);
    }
    CHECK(seen.size() == m.records.size());
  }
}

TEST_CASE("load then resize stays in range") {
  testutil::TempDir tmp("range");
  Rng rng(8);
  const Image img = testutil::random_image(rng, 19, 33);
  save_png(tmp.file("x.png"), img);
  const Image loaded = load_image(tmp.file("x.png"));
  const Image resized = resize(loaded, 24, 24);
  for (const float v : resized.data) {
    CHECK(v >= 0.f);
    CHECK(v <= 1.f);
  }
}

TEST_CASE("resize rejects degenerate targets") {
  const Image img = constant_image(16, 16, 0.5f);
  CHECK_THROWS_AS(resize(img, 0, 24), UsageError);
  CHECK_THROWS_AS(resize(img, 24, -3), UsageError);
}
