// Apache License, Version 2.0, refer to LICENSE.txt
#pragma once

#include <algorithm>
#include <numeric>
#include <vector>

#include "sbm/common.hpp"
#include "sbm/model.hpp"

namespace sbm {

/// Adjusted Rand index between two partitions of the same node set.
/// Pair-counting formula; invariant under relabeling of either argument.
inline double adjusted_rand_index(const BlockAssignment& a, const BlockAssignment& b) {
  if (a.n() != b.n()) throw InputError("adjusted_rand_index: length mismatch");
  const int n = a.n();
  const int qa = 1 + *std::max_element(a.labels.begin(), a.labels.end());
  const int qb = 1 + *std::max_element(b.labels.begin(), b.labels.end());
  Matrix table = Matrix::Zero(qa, qb);
  for (int i = 0; i < n; ++i) table(a.labels[i], b.labels[i]) += 1.0;
  auto choose2 = [](double m) { return m * (m - 1.0) / 2.0; };
  double sum_cells = 0.0;
  for (int r = 0; r < qa; ++r)
    for (int c = 0; c < qb; ++c) sum_cells += choose2(table(r, c));
  double sum_rows = 0.0, sum_cols = 0.0;
  for (int r = 0; r < qa; ++r) sum_rows += choose2(table.row(r).sum());
  for (int c = 0; c < qb; ++c) sum_cols += choose2(table.col(c).sum());
  const double expected = sum_rows * sum_cols / choose2(static_cast<double>(n));
  const double maximum = 0.5 * (sum_rows + sum_cols);
  if (maximum - expected == 0.0) return sum_cells - expected == 0.0 ? 1.0 : 0.0;
  return (sum_cells - expected) / (maximum - expected);
}

namespace detail {

inline double frobenius_for_perm(const Matrix& pi_hat, const Matrix& pi,
                                 const std::vector<int>& perm) {
  const int q = static_cast<int>(pi.rows());
  double err = 0.0;
  for (int a = 0; a < q; ++a)
    for (int b = 0; b < q; ++b) {
      const double d = pi_hat(perm[a], perm[b]) - pi(a, b);
      err += d * d;
    }
  return std::sqrt(err);
}

/// Greedy row matching on pi for large Q where Q! search is out of reach.
inline std::vector<int> greedy_row_match(const Matrix& pi_hat, const Matrix& pi) {
  const int q = static_cast<int>(pi.rows());
  std::vector<int> perm(q, -1);
  std::vector<char> used(q, 0);
  for (int a = 0; a < q; ++a) {
    int best = -1;
    double best_d = 0.0;
    for (int c = 0; c < q; ++c) {
      if (used[c]) continue;
      const double d = (pi_hat.row(c) - pi.row(a)).squaredNorm();
      if (best < 0 || d < best_d) { best = c; best_d = d; }
    }
    perm[a] = best;
    used[best] = 1;
  }
  return perm;
}

}  // namespace detail

/// Permutation perm minimizing ||pi_hat[perm,perm] - pi||_F (exhaustive up to
/// Q=6, greedy beyond); perm[a] names the pi_hat block matching truth block a.
inline std::vector<int> best_block_permutation(const Matrix& pi_hat, const Matrix& pi) {
  if (pi_hat.rows() != pi.rows() || pi_hat.cols() != pi.cols() || pi.rows() != pi.cols())
    throw InputError("best_block_permutation: dimension mismatch");
  const int q = static_cast<int>(pi.rows());
  if (q > 6) return detail::greedy_row_match(pi_hat, pi);
  std::vector<int> perm(q), best(q);
  std::iota(perm.begin(), perm.end(), 0);
  best = perm;
  double best_err = detail::frobenius_for_perm(pi_hat, pi, perm);
  while (std::next_permutation(perm.begin(), perm.end())) {
    const double err = detail::frobenius_for_perm(pi_hat, pi, perm);
    if (err < best_err) {
      best_err = err;
      best = perm;
    }
  }
  return best;
}

/// || P pi_hat P^t - pi ||_F / ||pi||_F minimized over block permutations P
/// (exhaustive up to Q=6, greedy row matching beyond).
inline double frobenius_rel_error(const Matrix& pi_hat, const Matrix& pi) {
  if (pi_hat.rows() != pi.rows() || pi_hat.cols() != pi.cols() || pi.rows() != pi.cols())
    throw InputError("frobenius_rel_error: dimension mismatch");
  const int q = static_cast<int>(pi.rows());
  const double denom = pi.norm();
  double best;
  if (q <= 6) {
    std::vector<int> perm(q);
    std::iota(perm.begin(), perm.end(), 0);
    best = detail::frobenius_for_perm(pi_hat, pi, perm);
    while (std::next_permutation(perm.begin(), perm.end()))
      best = std::min(best, detail::frobenius_for_perm(pi_hat, pi, perm));
  } else {
    best = detail::frobenius_for_perm(pi_hat, pi, detail::greedy_row_match(pi_hat, pi));
  }
  return denom > 0.0 ? best / denom : best;
}

}  // namespace sbm
