// Apache License, Version 2.0, refer to LICENSE.txt
//
// Test-only oracles: brute-force enumerations and generic numeric maximizers
// kept independent of the library's update formulas.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "sbm/common.hpp"
#include "sbm/model.hpp"

namespace oracles {

/// ARI by direct enumeration of all node pairs.
inline double ari_pair_counting(const std::vector<int>& a, const std::vector<int>& b) {
  const int n = static_cast<int>(a.size());
  double n11 = 0, n00 = 0, n10 = 0, n01 = 0;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      const bool same_a = a[i] == a[j];
      const bool same_b = b[i] == b[j];
      if (same_a && same_b) ++n11;
      else if (!same_a && !same_b) ++n00;
      else if (same_a) ++n10;
      else ++n01;
    }
  const double total = n11 + n00 + n10 + n01;
  const double expected = (n11 + n10) * (n11 + n01) / total;
  const double maximum = 0.5 * ((n11 + n10) + (n11 + n01));
  if (maximum - expected == 0.0) return n11 - expected == 0.0 ? 1.0 : 0.0;
  return (n11 - expected) / (maximum - expected);
}

/// Visits every label vector in {0..q-1}^n.
inline void enumerate_labelings(int n, int q, const std::function<void(const std::vector<int>&)>& fn) {
  std::vector<int> z(n, 0);
  for (;;) {
    fn(z);
    int pos = n - 1;
    while (pos >= 0 && z[pos] == q - 1) z[pos--] = 0;
    if (pos < 0) break;
    ++z[pos];
  }
}

/// log p(Y^o) by exhaustive summation over all label vectors.
inline double exhaustive_log_marginal_mar(const sbm::ObservedNetwork& net,
                                          const sbm::SbmParameters& params) {
  const int n = net.node_count();
  const int q = params.block_count();
  double total = 0.0;
  enumerate_labelings(n, q, [&](const std::vector<int>& z) {
    double p = 1.0;
    for (int i = 0; i < n; ++i) p *= params.alpha[z[i]];
    net.for_each_dyad([&](int i, int j, sbm::DyadState s) {
      if (s == sbm::DyadState::kMissing) return;
      const double pi = params.pi(z[i], z[j]);
      p *= s == sbm::DyadState::kPresent ? pi : 1.0 - pi;
    });
    total += p;
  });
  return std::log(total);
}

/// log p(Y^o, R) under double-standard sampling by exhaustive summation over
/// all label vectors and all configurations of the missing dyads.
inline double exhaustive_log_joint_double_standard(const sbm::ObservedNetwork& net,
                                                   const sbm::SbmParameters& params, double rho0,
                                                   double rho1) {
  const int n = net.node_count();
  const int q = params.block_count();
  const auto missing = net.missing_dyads();
  const std::size_t m = missing.size();
  double total = 0.0;
  enumerate_labelings(n, q, [&](const std::vector<int>& z) {
    double base = 1.0;
    for (int i = 0; i < n; ++i) base *= params.alpha[z[i]];
    net.for_each_dyad([&](int i, int j, sbm::DyadState s) {
      if (s == sbm::DyadState::kMissing) return;
      const double pi = params.pi(z[i], z[j]);
      base *= s == sbm::DyadState::kPresent ? pi * rho1 : (1.0 - pi) * rho0;
    });
    for (std::size_t mask = 0; mask < (std::size_t{1} << m); ++mask) {
      double p = base;
      for (std::size_t k = 0; k < m; ++k) {
        const auto [i, j] = missing[k];
        const double pi = params.pi(z[i], z[j]);
        const bool edge = (mask >> k) & 1u;
        p *= edge ? pi * (1.0 - rho1) : (1.0 - pi) * (1.0 - rho0);
      }
      total += p;
    }
  });
  return std::log(total);
}

/// Golden-section maximizer of a unimodal function on [lo, hi].
inline double golden_section_max(const std::function<double(double)>& f, double lo, double hi,
                                 double tol = 1e-10, int max_iter = 200) {
  const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double x1 = b - phi * (b - a), x2 = a + phi * (b - a);
  double f1 = f(x1), f2 = f(x2);
  for (int it = 0; it < max_iter && b - a > tol; ++it) {
    if (f1 < f2) {
      a = x1; x1 = x2; f1 = f2;
      x2 = a + phi * (b - a); f2 = f(x2);
    } else {
      b = x2; x2 = x1; f2 = f1;
      x1 = b - phi * (b - a); f1 = f(x1);
    }
  }
  return 0.5 * (a + b);
}

/// Golden section followed by finite-difference Newton steps: plain golden
/// section stalls near sqrt(eps) on flat maxima because function comparisons
/// sink into rounding noise.
inline double polished_max_1d(const std::function<double(double)>& f, double lo, double hi,
                              double h = 1e-4) {
  double x = golden_section_max(f, lo, hi);
  if (x - lo < 2 * h || hi - x < 2 * h) return x;  // boundary maximum
  for (int it = 0; it < 3; ++it) {
    const double fp = (f(x + h) - f(x - h)) / (2 * h);
    const double fpp = (f(x + h) - 2 * f(x) + f(x - h)) / (h * h);
    if (!(fpp < 0.0)) break;
    const double next = std::min(std::max(x - fp / fpp, lo + 2 * h), hi - 2 * h);
    if (std::abs(next - x) < 1e-14) break;
    x = next;
  }
  return x;
}

/// Shrinking-grid maximizer in two dimensions.
inline std::pair<double, double> grid_refine_2d(
    const std::function<double(double, double)>& f, double cx, double cy, double radius,
    int levels = 40, int points = 11) {
  double best_x = cx, best_y = cy;
  for (int level = 0; level < levels; ++level) {
    double bx = best_x, by = best_y, bf = f(best_x, best_y);
    for (int i = 0; i < points; ++i)
      for (int j = 0; j < points; ++j) {
        const double x = best_x + radius * (2.0 * i / (points - 1) - 1.0);
        const double y = best_y + radius * (2.0 * j / (points - 1) - 1.0);
        const double v = f(x, y);
        if (v > bf) { bf = v; bx = x; by = y; }
      }
    best_x = bx; best_y = by;
    radius *= 0.5;
  }
  return {best_x, best_y};
}

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double sample_sd(const std::vector<double>& v) {
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

inline double fraction(const std::vector<bool>& v) {
  double s = 0.0;
  for (bool x : v) s += x ? 1.0 : 0.0;
  return s / static_cast<double>(v.size());
}

}  // namespace oracles
