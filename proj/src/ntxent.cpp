#include "fundus/ntxent.hpp"

#include <cmath>
#include <limits>

#include "fundus/error.hpp"

namespace fundus::ssl {

double cosine_similarity(std::span<const double> u, std::span<const double> v) {
  require_input(u.size() == v.size() && !u.empty(),
                "cosine_similarity: dimension mismatch");
  double uu = 0.0, vv = 0.0, uv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    uu += u[i] * u[i];
    vv += v[i] * v[i];
    uv += u[i] * v[i];
  }
  require_input(uu > 0.0 && vv > 0.0, "cosine_similarity: zero-norm vector");
  return uv / (std::sqrt(uu) * std::sqrt(vv));
}

NtXentResult nt_xent_loss(std::span<const double> z, int rows, int dim,
                          double tau) {
  require_input(rows >= 4 && rows % 2 == 0,
                "nt_xent: need at least two pairs (rows >= 4, even)");
  require_input(tau > 0.0, "nt_xent: tau must be > 0");
  require_input(z.size() == static_cast<std::size_t>(rows) * dim,
                "nt_xent: z size mismatch");
  const auto n = static_cast<std::size_t>(rows);
  const auto d = static_cast<std::size_t>(dim);

  std::vector<double> norm(n);
  std::vector<double> u(n * d);  // unit rows
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double v = z[i * d + j];
      require_input(std::isfinite(v), "nt_xent: non-finite input");
      s += v * v;
    }
    require_input(s > 0.0, "nt_xent: zero-norm embedding row " +
                               std::to_string(i));
    norm[i] = std::sqrt(s);
    for (std::size_t j = 0; j < d; ++j) u[i * d + j] = z[i * d + j] / norm[i];
  }

  std::vector<double> sim(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = i + 1; k < n; ++k) {
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j) s += u[i * d + j] * u[k * d + j];
      sim[i * n + k] = s;
      sim[k * n + i] = s;
    }

  // Row-wise softmax over k != i with the positive at pair(i) = i ^ 1.
  double loss = 0.0;
  std::vector<double> g(n * n, 0.0);  // d loss / d sim[i][k]
  const double inv_rows = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t pos = i ^ 1;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < n; ++k)
      if (k != i) mx = std::max(mx, sim[i * n + k] / tau);
    double denom = 0.0;
    for (std::size_t k = 0; k < n; ++k)
      if (k != i) denom += std::exp(sim[i * n + k] / tau - mx);
    const double lse = mx + std::log(denom);
    loss += lse - sim[i * n + pos] / tau;
    for (std::size_t k = 0; k < n; ++k) {
      if (k == i) continue;
      const double p = std::exp(sim[i * n + k] / tau - lse);
      g[i * n + k] = inv_rows * (p - (k == pos ? 1.0 : 0.0)) / tau;
    }
  }
  loss *= inv_rows;

  // d sim(i,k) / d z_i = (u_k - sim * u_i) / |z_i|; sim[i][k] receives
  // gradient from both anchors i and k.
  NtXentResult res;
  res.loss = loss;
  res.grad.assign(n * d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double coef_self = 0.0;
    std::vector<double> acc(d, 0.0);
    for (std::size_t k = 0; k < n; ++k) {
      if (k == i) continue;
      const double m = g[i * n + k] + g[k * n + i];
      if (m == 0.0) continue;
      for (std::size_t j = 0; j < d; ++j) acc[j] += m * u[k * d + j];
      coef_self += m * sim[i * n + k];
    }
    for (std::size_t j = 0; j < d; ++j)
      res.grad[i * d + j] = (acc[j] - coef_self * u[i * d + j]) / norm[i];
  }
  return res;
}

}  // namespace fundus::ssl
