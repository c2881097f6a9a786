#pragma once

#include <span>
#include <vector>

namespace fundus::ssl {

// u.v / (|u||v|); throws on a zero-norm vector.
double cosine_similarity(std::span<const double> u, std::span<const double> v);

struct NtXentResult {
  double loss = 0.0;
  std::vector<double> grad;  // d loss / d z, rows x dim, row-major
};

// Normalized temperature-scaled cross entropy over cosine similarities.
// `z` is (2N) x dim row-major with positive pairs adjacent (rows 2k, 2k+1);
// the loss averages l(i, pair(i)) over all 2N anchor orderings. Computed in
// double precision; the gradient is the exact analytic derivative.
NtXentResult nt_xent_loss(std::span<const double> z, int rows, int dim,
                          double tau);

}  // namespace fundus::ssl
