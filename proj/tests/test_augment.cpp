#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fundus/augment.hpp"
#include "fundus/csv.hpp"
#include "fundus/error.hpp"
#include "fundus/image_io.hpp"
#include "fundus/rng.hpp"
#include "helpers.hpp"

using namespace fundus;
using namespace fundus::aug;

namespace {

FeatureMap map_from(const std::vector<std::vector<float>>& channels, int h,
                    int w) {
  FeatureMap fm(static_cast<int>(channels.size()), h, w);
  for (std::size_t c = 0; c < channels.size(); ++c)
    std::copy(channels[c].begin(), channels[c].end(), fm.channel(static_cast<int>(c)));
  return fm;
}

}  // namespace

TEST_CASE("channel_stats direct arithmetic") {
  const auto fm = map_from({{1, 2, 3, 4}}, 2, 2);
  const auto stats = channel_stats(fm);
  REQUIRE(stats.size() == 1);
  CHECK(stats[0].mu == doctest::Approx(2.5).epsilon(1e-12));
  CHECK(stats[0].sigma == doctest::Approx(std::sqrt(1.25)).epsilon(1e-12));
}

TEST_CASE("channel_stats degenerate channels") {
  const auto constant = channel_stats(map_from({{0.7f, 0.7f, 0.7f, 0.7f}}, 2, 2));
  CHECK(constant[0].mu == doctest::Approx(0.7).epsilon(1e-6));
  CHECK(constant[0].sigma == doctest::Approx(0.0));

  const auto single = channel_stats(map_from({{0.3f}}, 1, 1));
  CHECK(single[0].mu == doctest::Approx(0.3f));
  CHECK(single[0].sigma == doctest::Approx(0.0));
}

TEST_CASE("adain identity when style equals content") {
  Rng rng(3);
  const auto fm = testutil::random_feature_map(rng, 3, 5, 7);
  const auto out = adain(fm, fm, 0.0);
  for (std::size_t i = 0; i < fm.data.size(); ++i)
    CHECK(std::abs(out.data[i] - fm.data[i]) <= 1e-6);
}

TEST_CASE("adain hand-evaluated affine map") {
  const auto content = map_from({{1, 2, 3, 4}}, 2, 2);
  const auto style = map_from({{0, 2, 4, 6}}, 2, 2);
  const auto out = adain(content, style, 0.0);
  const float expect[4] = {0, 2, 4, 6};
  for (int i = 0; i < 4; ++i)
    CHECK(out.data[static_cast<std::size_t>(i)] ==
          doctest::Approx(expect[i]).epsilon(1e-6));
}

TEST_CASE("adain zero-variance content collapses to style mean") {
  const auto content = map_from({{0.4f, 0.4f, 0.4f, 0.4f}}, 2, 2);
  const auto style = map_from({{0, 1, 0, 1}}, 2, 2);
  const auto out = adain(content, style, 1e-5);
  for (const float v : out.data) CHECK(v == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("adain output stats equal style stats (property)") {
  Rng rng(11);
  for (int t = 0; t < 50; ++t) {
    const int c = 1 + static_cast<int>(rng.uniform_int(0, 3));
    const int h = 2 + static_cast<int>(rng.uniform_int(0, 6));
    const int w = 2 + static_cast<int>(rng.uniform_int(0, 6));
    const auto content = testutil::random_feature_map(rng, c, h, w);
    const auto style = testutil::random_feature_map(rng, c, 4, 4);
    const auto out = adain(content, style, 0.0);
    const auto out_stats = channel_stats(out);
    const auto style_stats = channel_stats(style);
    for (int i = 0; i < c; ++i) {
      CHECK(std::abs(out_stats[static_cast<std::size_t>(i)].mu -
                     style_stats[static_cast<std::size_t>(i)].mu) <= 1e-6);
      CHECK(std::abs(out_stats[static_cast<std::size_t>(i)].sigma -
                     style_stats[static_cast<std::size_t>(i)].sigma) <= 1e-6);
    }
  }
}

TEST_CASE("adain idempotence") {
  Rng rng(12);
  const auto content = testutil::random_feature_map(rng, 3, 6, 6);
  const auto style = testutil::random_feature_map(rng, 3, 5, 5);
  const auto once = adain(content, style, 0.0);
  const auto twice = adain(once, style, 0.0);
  for (std::size_t i = 0; i < once.data.size(); ++i)
    CHECK(std::abs(twice.data[i] - once.data[i]) <= 1e-6);
}

TEST_CASE("adain invariant to per-channel affine rescale of content") {
  Rng rng(13);
  const auto content = testutil::random_feature_map(rng, 2, 6, 6);
  const auto style = testutil::random_feature_map(rng, 2, 6, 6);
  FeatureMap scaled = content;
  for (int c = 0; c < 2; ++c) {
    const float a = static_cast<float>(rng.uniform(0.3, 3.0));
    const float b = static_cast<float>(rng.uniform(-1.0, 1.0));
    float* p = scaled.channel(c);
    for (std::size_t i = 0; i < scaled.plane_size(); ++i) p[i] = a * p[i] + b;
  }
  const auto base = adain(content, style, 0.0);
  const auto moved = adain(scaled, style, 0.0);
  for (std::size_t i = 0; i < base.data.size(); ++i)
    CHECK(std::abs(base.data[i] - moved.data[i]) <= 1e-5);
}

TEST_CASE("adain rejects channel mismatch") {
  Rng rng(14);
  const auto a = testutil::random_feature_map(rng, 2, 4, 4);
  const auto b = testutil::random_feature_map(rng, 3, 4, 4);
  CHECK_THROWS_AS(adain(a, b, 0.0), UsageError);
}

TEST_CASE("nst_augment alpha 0 with identity codec is identity") {
  Rng rng(15);
  const Image img = testutil::random_image(rng, 12, 12);
  const Image style = testutil::random_image(rng, 12, 12);
  const Image out = nst_augment(img, style, 0.0, identity_codec());
  for (std::size_t i = 0; i < img.data.size(); ++i)
    CHECK(out.data[i] == img.data[i]);
}

TEST_CASE("nst_augment alpha 1 transfers style pixel statistics") {
  Rng rng(16);
  // Style values kept central so clamping stays inactive.
  Image img = testutil::random_image(rng, 16, 16);
  Image style(16, 16);
  for (auto& v : style.data) v = static_cast<float>(rng.uniform(0.4, 0.6));
  const Image out = nst_augment(img, style, 1.0, identity_codec(), 0.0);
  const auto out_stats = channel_stats(image_to_chw(out));
  const auto style_stats = channel_stats(image_to_chw(style));
  for (int c = 0; c < 3; ++c) {
    CHECK(std::abs(out_stats[static_cast<std::size_t>(c)].mu -
                   style_stats[static_cast<std::size_t>(c)].mu) <= 1e-6);
    CHECK(std::abs(out_stats[static_cast<std::size_t>(c)].sigma -
                   style_stats[static_cast<std::size_t>(c)].sigma) <= 1e-6);
  }

  // Second application with the same style is a fixed point.
  const Image again = nst_augment(out, style, 1.0, identity_codec(), 0.0);
  for (std::size_t i = 0; i < out.data.size(); ++i)
    CHECK(std::abs(again.data[i] - out.data[i]) <= 1e-6);
}

TEST_CASE("apply_regular disabled policy is identity at matching size") {
  Rng master(17);
  const Image img = testutil::random_image(master, 16, 16);
  const auto policy = AugmentationPolicy::disabled(16);
  Rng rng = Rng::stream(5, "view");
  const Image out = apply_regular(img, policy, rng);
  REQUIRE(out.height == 16);
  for (std::size_t i = 0; i < img.data.size(); ++i)
    CHECK(out.data[i] == img.data[i]);
}

TEST_CASE("apply_regular deterministic under fixed stream") {
  Rng master(18);
  const Image img = testutil::random_image(master, 20, 20);
  AugmentationPolicy policy;
  policy.out_size = 16;
  Rng r1 = Rng::stream(77, "aug");
  Rng r2 = Rng::stream(77, "aug");
  const Image a = apply_regular(img, policy, r1);
  const Image b = apply_regular(img, policy, r2);
  for (std::size_t i = 0; i < a.data.size(); ++i) CHECK(a.data[i] == b.data[i]);
}

TEST_CASE("hflip mirrors columns") {
  Image img(2, 2);
  // [[a,b],[c,d]] in channel 0
  img.at(0, 0, 0) = 0.1f;
  img.at(0, 1, 0) = 0.2f;
  img.at(1, 0, 0) = 0.3f;
  img.at(1, 1, 0) = 0.4f;
  AugmentationPolicy policy = AugmentationPolicy::disabled(8);
  policy.p_hflip = 1.0;
  // Feed an 8x8 upscaled version to keep the resize a no-op on the pattern:
  // instead check mirror symmetry via two disabled-resize runs on 8x8.
  Image big(8, 8);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x)
      for (int c = 0; c < 3; ++c)
        big.at(y, x, c) = static_cast<float>(x) / 7.f;
  Rng rng = Rng::stream(1, "flip");
  const Image flipped = apply_regular(big, policy, rng);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x)
      CHECK(flipped.at(y, x, 0) ==
            doctest::Approx(big.at(y, 7 - x, 0)).epsilon(1e-6));
}

TEST_CASE("augment output shape and range invariants") {
  Rng master(19);
  AugmentationPolicy policy;
  policy.out_size = 24;
  StyleBank bank;
  bank.styles.push_back(testutil::random_image(master, 16, 16));
  bank.styles.push_back(testutil::random_image(master, 16, 16));
  for (int t = 0; t < 10; ++t) {
    const Image img = testutil::random_image(master, 32, 32);
    Rng rng = Rng::stream(100 + static_cast<std::uint64_t>(t), "pair");
    const auto [a, b] = make_view_pair(img, policy, bank, rng);
    for (const Image* v : {&a, &b}) {
      CHECK(v->height == 24);
      CHECK(v->width == 24);
      for (const float x : v->data) {
        CHECK(x >= 0.f);
        CHECK(x <= 1.f);
      }
    }
  }
}

TEST_CASE("make_view_pair p_nst=0 never touches the bank") {
  Rng master(20);
  const Image img = testutil::random_image(master, 16, 16);
  AugmentationPolicy policy = AugmentationPolicy::disabled(16);
  StyleBank empty;
  Rng rng = Rng::stream(9, "pair");
  const auto [a, b] = make_view_pair(img, policy, empty, rng);
  for (std::size_t i = 0; i < img.data.size(); ++i) {
    CHECK(a.data[i] == img.data[i]);
    CHECK(b.data[i] == img.data[i]);
  }
}

TEST_CASE("make_view_pair p_nst=1 carries style statistics") {
  Rng master(21);
  const Image img = testutil::random_image(master, 16, 16);
  AugmentationPolicy policy = AugmentationPolicy::disabled(16);
  policy.p_nst = 1.0;
  policy.nst_alpha = 1.0;
  StyleBank bank;
  Image style(16, 16);
  for (auto& v : style.data) v = static_cast<float>(master.uniform(0.45, 0.55));
  bank.styles.push_back(style);
  Rng rng = Rng::stream(10, "pair");
  const auto [a, b] = make_view_pair(img, policy, bank, rng);
  const auto want = channel_stats(image_to_chw(style));
  for (const Image* v : {&a, &b}) {
    const auto got = channel_stats(image_to_chw(*v));
    for (int c = 0; c < 3; ++c) {
      CHECK(std::abs(got[static_cast<std::size_t>(c)].mu -
                     want[static_cast<std::size_t>(c)].mu) <= 1e-5);
      CHECK(std::abs(got[static_cast<std::size_t>(c)].sigma -
                     want[static_cast<std::size_t>(c)].sigma) <= 1e-5);
    }
  }
}

TEST_CASE("make_view_pair reproducible and requires styles when gated on") {
  Rng master(22);
  const Image img = testutil::random_image(master, 20, 20);
  AugmentationPolicy policy;
  policy.out_size = 16;
  policy.p_nst = 0.5;
  StyleBank bank;
  bank.styles.push_back(testutil::random_image(master, 12, 12));

  Rng r1 = Rng::stream(33, "vp");
  Rng r2 = Rng::stream(33, "vp");
  const auto pair1 = make_view_pair(img, policy, bank, r1);
  const auto pair2 = make_view_pair(img, policy, bank, r2);
  for (std::size_t i = 0; i < pair1.first.data.size(); ++i) {
    CHECK(pair1.first.data[i] == pair2.first.data[i]);
    CHECK(pair1.second.data[i] == pair2.second.data[i]);
  }

  StyleBank empty;
  Rng r3 = Rng::stream(33, "vp");
  CHECK_THROWS_AS(make_view_pair(img, policy, empty, r3), UsageError);
}

TEST_CASE("style bank loads sorted directory") {
  testutil::TempDir tmp("bank");
  Rng rng(23);
  ingest::save_png(tmp.file("b.png"), testutil::random_image(rng, 8, 8));
  ingest::save_png(tmp.file("a.png"), testutil::random_image(rng, 8, 8));
  write_text_file(tmp.file("notes.txt"), "ignored");
  const auto bank = load_style_bank(tmp.path.string());
  CHECK(bank.styles.size() == 2);
  CHECK_THROWS_AS(load_style_bank(tmp.file("missing_dir")), UsageError);
}
