#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "fundus/error.hpp"
#include "fundus/ntxent.hpp"
#include "fundus/rng.hpp"

using namespace fundus;
using namespace fundus::ssl;

namespace {

// Independent oracle, written directly from the definition: for each
// ordered anchor i with positive j = pair(i),
//   l(i,j) = -log( exp(sim(i,j)/tau) / sum_{k != i} exp(sim(i,k)/tau) )
// and the loss is the mean over all 2N anchors. No shared code with the
// implementation beyond basic math calls.
double nt_xent_oracle(const std::vector<double>& z, int rows, int dim,
                      double tau) {
  auto sim = [&](int a, int b) {
    double uu = 0, vv = 0, uv = 0;
    for (int j = 0; j < dim; ++j) {
      const double x = z[static_cast<std::size_t>(a) * dim + j];
      const double y = z[static_cast<std::size_t>(b) * dim + j];
      uu += x * x;
      vv += y * y;
      uv += x * y;
    }
    return uv / (std::sqrt(uu) * std::sqrt(vv));
  };
  double total = 0.0;
  for (int i = 0; i < rows; ++i) {
    const int j = i ^ 1;
    double denom = 0.0;
    for (int k = 0; k < rows; ++k)
      if (k != i) denom += std::exp(sim(i, k) / tau);
    total += -std::log(std::exp(sim(i, j) / tau) / denom);
  }
  return total / rows;
}

std::vector<double> random_batch(Rng& rng, int rows, int dim) {
  std::vector<double> z(static_cast<std::size_t>(rows) * dim);
  for (auto& v : z) v = rng.normal();
  return z;
}

}  // namespace

TEST_CASE("all-identical rows give ln(2N-1)") {
  for (int n : {2, 3, 4, 8}) {
    const int rows = 2 * n;
    std::vector<double> z(static_cast<std::size_t>(rows) * 3);
    for (int i = 0; i < rows; ++i) {
      z[static_cast<std::size_t>(i) * 3 + 0] = 0.3;
      z[static_cast<std::size_t>(i) * 3 + 1] = -1.2;
      z[static_cast<std::size_t>(i) * 3 + 2] = 0.5;
    }
    const auto res = nt_xent_loss(z, rows, 3, 0.5);
    CHECK(std::abs(res.loss - std::log(2.0 * n - 1.0)) <= 1e-9);
  }
}

TEST_CASE("orthogonal pair example at tau 0.5") {
  // Pairs (e1,e1) and (e2,e2): per-anchor loss log(1 + 2 e^-2).
  const std::vector<double> z = {1, 0, 1, 0, 0, 1, 0, 1};
  const auto res = nt_xent_loss(z, 4, 2, 0.5);
  const double expect = std::log(1.0 + 2.0 * std::exp(-2.0));
  CHECK(std::abs(res.loss - expect) <= 1e-12);
  CHECK(res.loss == doctest::Approx(0.23954).epsilon(1e-4));
  CHECK(std::abs(res.loss - nt_xent_oracle(z, 4, 2, 0.5)) <= 1e-12);
}

TEST_CASE("matches brute-force oracle on random batches") {
  Rng rng(31);
  for (int t = 0; t < 60; ++t) {
    const int n = 2 + static_cast<int>(rng.uniform_int(0, 6));
    const int dim = 2 + static_cast<int>(rng.uniform_int(0, 14));
    const double tau = std::vector<double>{0.1, 0.5, 1.0}[static_cast<std::size_t>(
        rng.uniform_int(0, 2))];
    const auto z = random_batch(rng, 2 * n, dim);
    const auto res = nt_xent_loss(z, 2 * n, dim, tau);
    CHECK(std::abs(res.loss - nt_xent_oracle(z, 2 * n, dim, tau)) <= 1e-6);
  }
}

TEST_CASE("analytic gradient matches central finite differences") {
  Rng rng(32);
  for (int t = 0; t < 10; ++t) {
    const int n = 2 + static_cast<int>(rng.uniform_int(0, 2));
    const int dim = 2 + static_cast<int>(rng.uniform_int(0, 6));
    const double tau = t % 2 ? 0.5 : 0.2;
    auto z = random_batch(rng, 2 * n, dim);
    const auto res = nt_xent_loss(z, 2 * n, dim, tau);
    const double h = 1e-6;
    for (std::size_t i = 0; i < z.size(); i += 3) {  // probe a subset
      const double keep = z[i];
      z[i] = keep + h;
      const double up = nt_xent_loss(z, 2 * n, dim, tau).loss;
      z[i] = keep - h;
      const double down = nt_xent_loss(z, 2 * n, dim, tau).loss;
      z[i] = keep;
      const double fd = (up - down) / (2 * h);
      const double scale = std::max({std::abs(fd), std::abs(res.grad[i]), 1e-6});
      CHECK(std::abs(fd - res.grad[i]) / scale <= 1e-4);
    }
  }
}

TEST_CASE("invariant to global scaling of Z") {
  Rng rng(33);
  const auto z = random_batch(rng, 8, 5);
  const auto base = nt_xent_loss(z, 8, 5, 0.5);
  for (const double c : {0.1, 3.0, 250.0}) {
    auto scaled = z;
    for (auto& v : scaled) v *= c;
    const auto res = nt_xent_loss(scaled, 8, 5, 0.5);
    CHECK(std::abs(res.loss - base.loss) <= 1e-9);
  }
}

TEST_CASE("invariant to a common rotation") {
  Rng rng(34);
  const int dim = 4;
  const auto z = random_batch(rng, 8, dim);
  // Random Givens rotations compose into an orthogonal map.
  std::vector<double> rot(z);
  for (int pass = 0; pass < 6; ++pass) {
    const int a = static_cast<int>(rng.uniform_int(0, dim - 1));
    int b = static_cast<int>(rng.uniform_int(0, dim - 1));
    if (a == b) b = (b + 1) % dim;
    const double theta = rng.uniform(0, 2 * std::numbers::pi);
    const double c = std::cos(theta), s = std::sin(theta);
    for (int r = 0; r < 8; ++r) {
      double& xa = rot[static_cast<std::size_t>(r) * dim + a];
      double& xb = rot[static_cast<std::size_t>(r) * dim + b];
      const double na = c * xa - s * xb;
      const double nb = s * xa + c * xb;
      xa = na;
      xb = nb;
    }
  }
  const auto base = nt_xent_loss(z, 8, dim, 0.5);
  const auto res = nt_xent_loss(rot, 8, dim, 0.5);
  CHECK(std::abs(res.loss - base.loss) <= 1e-9);
}

TEST_CASE("invariant to permuting pairs") {
  Rng rng(35);
  const int dim = 6;
  const auto z = random_batch(rng, 8, dim);
  // Swap pair blocks (0,1) <-> (2,3).
  auto perm = z;
  for (int j = 0; j < dim; ++j) {
    std::swap(perm[0 * dim + j], perm[2 * dim + j]);
    std::swap(perm[1 * dim + j], perm[3 * dim + j]);
  }
  const auto base = nt_xent_loss(z, 8, dim, 0.7);
  const auto res = nt_xent_loss(perm, 8, dim, 0.7);
  CHECK(std::abs(res.loss - base.loss) <= 1e-9);
}

TEST_CASE("gradient descent on a fixed batch decreases the loss") {
  Rng rng(36);
  auto z = random_batch(rng, 8, 4);
  const double initial = nt_xent_loss(z, 8, 4, 0.5).loss;
  double last = initial;
  for (int step = 0; step < 100; ++step) {
    const auto res = nt_xent_loss(z, 8, 4, 0.5);
    last = res.loss;
    for (std::size_t i = 0; i < z.size(); ++i) z[i] -= 1e-2 * res.grad[i];
  }
  CHECK(last < initial);
}

TEST_CASE("input validation") {
  CHECK_THROWS_AS(nt_xent_loss(std::vector<double>(4), 2, 2, 0.5), UsageError);
  CHECK_THROWS_AS(nt_xent_loss(std::vector<double>(8), 4, 2, 0.0), UsageError);
  std::vector<double> zero_row = {1, 0, 0, 0, 0, 1, 1, 1};
  CHECK_THROWS_AS(nt_xent_loss(zero_row, 4, 2, 0.5), UsageError);
  std::vector<double> bad = {1, 0, 1, 0, 0, 1,
                             std::numeric_limits<double>::quiet_NaN(), 1};
  CHECK_THROWS_AS(nt_xent_loss(bad, 4, 2, 0.5), UsageError);
}

TEST_CASE("cosine similarity basics") {
  const std::vector<double> e1 = {1, 0}, e2 = {0, 1}, v = {1, 1};
  CHECK(cosine_similarity(e1, e1) == doctest::Approx(1.0));
  CHECK(cosine_similarity(e1, e2) == doctest::Approx(0.0));
  CHECK(cosine_similarity(e1, v) ==
        doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));
  const std::vector<double> zero = {0, 0};
  CHECK_THROWS_AS(cosine_similarity(e1, zero), UsageError);
}
