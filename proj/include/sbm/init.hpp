// Apache License, Version 2.0, refer to LICENSE.txt
#pragma once

#include <algorithm>
#include <numeric>
#include <vector>

#include "sbm/common.hpp"
#include "sbm/model.hpp"

namespace sbm {

enum class InitStrategy { kSpectral, kRandom };

namespace detail {

/// Plain Lloyd k-means with greedy (kmeans++-style) seeding. Empty clusters
/// grab the point farthest from its center.
inline std::vector<int> kmeans(const Matrix& points, int k, Rng& rng, int max_iter = 100) {
  const int n = static_cast<int>(points.rows());
  Matrix centers(k, points.cols());
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  centers.row(0) = points.row(std::uniform_int_distribution<int>(0, n - 1)(rng));
  for (int c = 1; c < k; ++c) {
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], (points.row(i) - centers.row(c - 1)).squaredNorm());
      total += d2[i];
    }
    int pick = 0;
    if (total > 0.0) {
      double u = uniform01(rng) * total, acc = 0.0;
      for (int i = 0; i < n; ++i) {
        acc += d2[i];
        if (u < acc) { pick = i; break; }
      }
    } else {
      pick = std::uniform_int_distribution<int>(0, n - 1)(rng);
    }
    centers.row(c) = points.row(pick);
  }

  std::vector<int> labels(n, 0);
  for (int iter = 0; iter < max_iter; ++iter) {
    bool changed = false;
    for (int i = 0; i < n; ++i) {
      int best = 0;
      double best_d = (points.row(i) - centers.row(0)).squaredNorm();
      for (int c = 1; c < k; ++c) {
        const double d = (points.row(i) - centers.row(c)).squaredNorm();
        if (d < best_d) { best_d = d; best = c; }
      }
      if (labels[i] != best) { labels[i] = best; changed = true; }
    }
    std::vector<int> counts(k, 0);
    centers.setZero();
    for (int i = 0; i < n; ++i) {
      centers.row(labels[i]) += points.row(i);
      ++counts[labels[i]];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[c] > 0) {
        centers.row(c) /= counts[c];
      } else {
        int far = 0;
        double far_d = -1.0;
        for (int i = 0; i < n; ++i) {
          const double d = (points.row(i) - centers.row(labels[i])).squaredNorm();
          if (d > far_d) { far_d = d; far = i; }
        }
        centers.row(c) = points.row(far);
        labels[far] = c;
        changed = true;
      }
    }
    if (!changed && iter > 0) break;
  }
  return labels;
}

}  // namespace detail

/// Row-stochastic n x Q matrix with flat Dirichlet rows.
inline Matrix random_responsibilities(int n, int q, Rng& rng) {
  Matrix tau(n, q);
  for (int i = 0; i < n; ++i) tau.row(i) = dirichlet_uniform(q, rng).transpose();
  return tau;
}

/// Spectral clustering of the observed adjacency (missing imputed as 0):
/// eigenvectors of D^-1/2 A D^-1/2 for the q largest |eigenvalues|, sign
/// normalized (the entry of largest magnitude is made positive; entrywise
/// absolute values would merge blocks that differ only by sign, e.g. the
/// (b,-b,0) pattern of symmetric communities), k-means on the rows, one-hot
/// softened by clamping to [0.05, 0.95] so later log-based updates never see
/// a hard zero.
inline Matrix spectral_responsibilities(const ObservedNetwork& net, int q, Rng& rng) {
  const int n = net.node_count();
  Matrix a = net.observed_adjacency();
  Vector deg = a.rowwise().sum();
  Vector dinv(n);
  for (int i = 0; i < n; ++i) dinv[i] = deg[i] > 0.0 ? 1.0 / std::sqrt(deg[i]) : 0.0;
  Matrix norm = dinv.asDiagonal() * a * dinv.asDiagonal();
  Eigen::SelfAdjointEigenSolver<Matrix> eig(norm);
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int x, int y) {
    return std::abs(eig.eigenvalues()[x]) > std::abs(eig.eigenvalues()[y]);
  });
  Matrix embed(n, q);
  for (int c = 0; c < q; ++c) {
    Vector v = eig.eigenvectors().col(order[c]);
    Eigen::Index peak;
    v.cwiseAbs().maxCoeff(&peak);
    if (v[peak] < 0.0) v = -v;
    embed.col(c) = v;
  }
  const std::vector<int> labels = detail::kmeans(embed, q, rng);
  Matrix tau = Matrix::Zero(n, q);
  for (int i = 0; i < n; ++i) tau(i, labels[i]) = 1.0;
  tau = tau.cwiseMax(0.05).cwiseMin(0.95);
  for (int i = 0; i < n; ++i) tau.row(i) /= tau.row(i).sum();
  return tau;
}

inline Matrix init_clustering(const ObservedNetwork& net, int q, InitStrategy strategy, Rng& rng) {
  if (q < 1) throw InputError("init_clustering: q must be >= 1");
  if (q > net.node_count()) throw InputError("init_clustering: q exceeds node count");
  if (q == 1) return Matrix::Ones(net.node_count(), 1);
  return strategy == InitStrategy::kRandom
             ? random_responsibilities(net.node_count(), q, rng)
             : spectral_responsibilities(net, q, rng);
}

}  // namespace sbm
