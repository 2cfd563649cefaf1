// Apache License, Version 2.0, refer to LICENSE.txt
#pragma once

#include <algorithm>
#include <numeric>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Eigenvalues>

#include "sbm/common.hpp"
#include "sbm/designs.hpp"
#include "sbm/model.hpp"

namespace sbm {

enum class MomentKind { kRandomDyad, kStar, kClass };

/// Low-order observation moments of a sampled SBM. u drives the primary
/// Hankel system; v and the cross matrix are present where the recovery
/// needs them (v only under class sampling).
struct MomentSequence {
  MomentKind kind = MomentKind::kRandomDyad;
  int q = 0;
  double rho = 1.0;              // scalar sampling effort (random-dyad / star)
  Vector u;                      // length 2Q
  std::optional<Vector> v;       // length 2Q, class sampling only
  std::optional<Matrix> cross;   // Q x Q cross-moment matrix U
};

namespace detail {

/// Power matrix V(i,q) = roots[q]^i without the distinctness check (the
/// analytic moment constructor must not fail on degenerate inputs).
inline Matrix vandermonde_matrix(const Vector& roots) {
  const int q = static_cast<int>(roots.size());
  Matrix v(q, q);
  for (int k = 0; k < q; ++k) {
    double p = 1.0;
    for (int i = 0; i < q; ++i) {
      v(i, k) = p;
      p *= roots[k];
    }
  }
  return v;
}

}  // namespace detail

/// Vandermonde system attached to a strictly increasing root vector.
struct VandermondeSystem {
  Vector roots;    // strictly increasing
  Matrix vmatrix;  // V(i,q) = roots[q]^i, i = 0..Q-1

  explicit VandermondeSystem(const Vector& r) : roots(r) {
    for (Eigen::Index k = 1; k < roots.size(); ++k)
      if (roots[k] - roots[k - 1] <= 1e-10)
        throw NumericalError("Vandermonde roots are not pairwise distinct");
    vmatrix = detail::vandermonde_matrix(roots);
  }
};

namespace detail {

inline std::vector<int> sorted_order(const Vector& x) {
  std::vector<int> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) { return x[a] < x[b]; });
  return order;
}

inline Vector power_moments(const Vector& weights, const Vector& roots, int count) {
  Vector u = Vector::Zero(count);
  for (Eigen::Index k = 0; k < roots.size(); ++k) {
    double p = 1.0;
    for (int i = 0; i < count; ++i) {
      u[i] += weights[k] * p;
      p *= roots[k];
    }
  }
  return u;
}

/// Gaussian elimination determinant in extended precision: the Hankel minors
/// of a moment sequence cancel heavily, and the lost digits would be
/// amplified into the recovered parameters. Alongside the value, an estimate
/// of the rounding noise floor (element growth times machine epsilon) is
/// returned so a degenerate minor can be told apart from a small one.
struct DeterminantEstimate {
  double value;
  double noise;
};

inline DeterminantEstimate determinant_ld(const Matrix& m) {
  const int n = static_cast<int>(m.rows());
  std::vector<std::vector<long double>> a(n, std::vector<long double>(n));
  long double growth = 0.0L;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      a[i][j] = static_cast<long double>(m(i, j));
      growth = std::max(growth, std::abs(a[i][j]));
    }
  long double det = 1.0L;
  long double leading = 1.0L;
  for (int c = 0; c < n; ++c) {
    int pivot = c;
    for (int r = c + 1; r < n; ++r)
      if (std::abs(a[r][c]) > std::abs(a[pivot][c])) pivot = r;
    if (a[pivot][c] == 0.0L) {
      det = 0.0L;
      break;
    }
    if (pivot != c) {
      std::swap(a[pivot], a[c]);
      det = -det;
    }
    if (c < n - 1) leading *= std::abs(a[c][c]);
    det *= a[c][c];
    for (int r = c + 1; r < n; ++r) {
      const long double f = a[r][c] / a[c][c];
      for (int j = c; j < n; ++j) {
        a[r][j] -= f * a[c][j];
        growth = std::max(growth, std::abs(a[r][j]));
      }
    }
  }
  constexpr long double kEpsLd = 1.1e-19L;
  const long double noise = n * n * kEpsLd * growth * std::max(leading, 1e-30L);
  return {static_cast<double>(det), static_cast<double>(noise)};
}

/// Roots of the Q-degree polynomial B(x) = sum_k (-1)^(k+Q) det(M_k) x^k
/// built from the (Q+1) x Q Hankel slab of a moment sequence; extracted as
/// companion-matrix eigenvalues and returned sorted.
inline Vector hankel_roots(const Vector& u, int q) {
  Matrix hankel(q + 1, q);
  for (int i = 0; i <= q; ++i)
    for (int j = 0; j < q; ++j) hankel(i, j) = u[i + j];
  Vector coeff(q + 1);
  double lead_noise = 0.0;
  for (int k = 0; k <= q; ++k) {
    Matrix minor(q, q);
    int r = 0;
    for (int i = 0; i <= q; ++i) {
      if (i == k) continue;
      minor.row(r++) = hankel.row(i);
    }
    const double sign = ((k + q) % 2 == 0) ? 1.0 : -1.0;
    const DeterminantEstimate det = determinant_ld(minor);
    coeff[k] = sign * det.value;
    if (k == q) lead_noise = det.noise;
  }
  // Degenerate moment sequences drop the slab's rank: the leading minor
  // vanishes in exact arithmetic and its computed value sinks to the
  // elimination's rounding floor. Small-but-genuine determinants sit orders
  // of magnitude above that floor.
  const double scale = coeff.cwiseAbs().maxCoeff();
  if (scale < 1e-250 || std::abs(coeff[q]) < 1e4 * lead_noise ||
      std::abs(coeff[q]) < 1e-9 * scale)
    throw NumericalError("moment recovery: singular Hankel matrix");
  Matrix companion = Matrix::Zero(q, q);
  for (int i = 1; i < q; ++i) companion(i, i - 1) = 1.0;
  for (int i = 0; i < q; ++i) companion(i, q - 1) = -coeff[i] / coeff[q];
  // Transposed-companion convention: last column carries the coefficients.
  Eigen::EigenSolver<Matrix> eig(companion);
  Vector roots(q);
  for (int k = 0; k < q; ++k) {
    if (std::abs(eig.eigenvalues()[k].imag()) > 1e-8)
      throw NumericalError("moment recovery: complex roots");
    roots[k] = eig.eigenvalues()[k].real();
  }
  // Newton polishing: the eigenvalue residual (~1e-8) is amplified a few
  // hundredfold by the downstream Vandermonde solves, so push the roots to
  // machine precision first.
  for (int k = 0; k < q; ++k) {
    for (int it = 0; it < 3; ++it) {
      double b = coeff[q], db = 0.0;
      for (int d = q - 1; d >= 0; --d) {
        db = db * roots[k] + b;
        b = b * roots[k] + coeff[d];
      }
      if (db == 0.0) break;
      const double step = b / db;
      roots[k] -= step;
      if (std::abs(step) < 1e-15 * std::max(1.0, std::abs(roots[k]))) break;
    }
  }
  std::sort(roots.data(), roots.data() + q);
  return roots;
}

inline Matrix hankel_square(const Vector& u, int q) {
  Matrix m(q, q);
  for (int i = 0; i < q; ++i)
    for (int j = 0; j < q; ++j) m(i, j) = u[i + j];
  return m;
}

/// V^-1 M V^-t via two LU solves.
inline Matrix sandwich_inverse(const Matrix& v, const Matrix& m) {
  const auto lu = v.fullPivLu();
  const Matrix left = lu.solve(m);
  return lu.solve(left.transpose()).transpose();
}

}  // namespace detail

/// Analytic moments of the observed part of an SBM under random-dyad, star or
/// class sampling, laid out in the sorted-root block order the recovery
/// reproduces.
inline MomentSequence exact_moments(const SbmParameters& params, const SamplingDesign& design) {
  params.validate();
  const int q = params.block_count();
  MomentSequence mom;
  mom.q = q;

  if (const auto* rd = std::get_if<RandomDyadSampling>(&design)) {
    mom.kind = MomentKind::kRandomDyad;
    mom.rho = rd->rho;
    Vector s = rd->rho * (params.pi * params.alpha);
    const auto order = detail::sorted_order(s);
    Vector ss(q), aa(q);
    Matrix pp(q, q);
    for (int a = 0; a < q; ++a) {
      ss[a] = s[order[a]];
      aa[a] = params.alpha[order[a]];
      for (int b = 0; b < q; ++b) pp(a, b) = params.pi(order[a], order[b]);
    }
    mom.u = detail::power_moments(aa, ss, 2 * q);
    const Matrix vm = detail::vandermonde_matrix(ss);
    mom.cross = vm * aa.asDiagonal() * pp * aa.asDiagonal() * vm.transpose();
    return mom;
  }
  if (const auto* st = std::get_if<StarSampling>(&design)) {
    mom.kind = MomentKind::kStar;
    mom.rho = st->rho;
    Vector s = params.pi * params.alpha;
    const auto order = detail::sorted_order(s);
    Vector ss(q), aa(q);
    Matrix pp(q, q);
    for (int a = 0; a < q; ++a) {
      ss[a] = s[order[a]];
      aa[a] = params.alpha[order[a]];
      for (int b = 0; b < q; ++b) pp(a, b) = params.pi(order[a], order[b]);
    }
    mom.u = st->rho * detail::power_moments(aa, ss, 2 * q);
    const Matrix vm = detail::vandermonde_matrix(ss);
    mom.cross =
        st->rho * st->rho * vm * aa.asDiagonal() * pp * aa.asDiagonal() * vm.transpose();
    return mom;
  }
  const auto* cs = std::get_if<ClassSampling>(&design);
  if (cs == nullptr)
    throw InputError("exact_moments: supported designs are random-dyad, star and class");
  if (static_cast<int>(cs->rho.size()) != q)
    throw InputError("exact_moments: class rho length must equal the block count");
  mom.kind = MomentKind::kClass;

  // t-system (sorted by t): drives alpha and the cross matrix.
  Vector t = params.pi * cs->rho.cwiseProduct(params.alpha);
  const auto t_order = detail::sorted_order(t);
  Vector tt(q), aa(q), rr(q);
  Matrix pp(q, q);
  for (int a = 0; a < q; ++a) {
    tt[a] = t[t_order[a]];
    aa[a] = params.alpha[t_order[a]];
    rr[a] = cs->rho[t_order[a]];
    for (int b = 0; b < q; ++b) pp(a, b) = params.pi(t_order[a], t_order[b]);
  }
  mom.v = detail::power_moments(aa, tt, 2 * q);
  const Matrix tvm = detail::vandermonde_matrix(tt);
  mom.cross =
      tvm * aa.asDiagonal() * pp * aa.asDiagonal() * rr.asDiagonal() * tvm.transpose();

  // o-system (sorted by o): drives rho through the alpha.rho weights.
  Vector o = params.pi * params.alpha;
  const auto o_order = detail::sorted_order(o);
  Vector oo(q), ww(q);
  for (int a = 0; a < q; ++a) {
    oo[a] = o[o_order[a]];
    ww[a] = params.alpha[o_order[a]] * cs->rho[o_order[a]];
  }
  mom.u = detail::power_moments(ww, oo, 2 * q);
  return mom;
}

/// Recovers (alpha, pi) from exact moments under random-dyad or star sampling
/// with known rho. Output blocks are ordered by increasing root.
inline SbmParameters recover_mar(const MomentSequence& mom, double rho, int q) {
  if (q < 1) throw InputError("recover_mar: q must be >= 1");
  if (mom.kind == MomentKind::kClass)
    throw InputError("recover_mar: use recover_class for class sampling moments");
  if (mom.u.size() < 2 * q) throw InputError("recover_mar: need 2Q moments");
  if (!mom.cross) throw InputError("recover_mar: cross-moment matrix required");
  const Vector roots = detail::hankel_roots(mom.u, q);
  const VandermondeSystem sys(roots);
  Matrix a_mat = detail::sandwich_inverse(sys.vmatrix, detail::hankel_square(mom.u, q));
  if (mom.kind == MomentKind::kStar) a_mat /= rho;
  SbmParameters out;
  out.alpha = a_mat.diagonal();
  Matrix g = detail::sandwich_inverse(sys.vmatrix, *mom.cross);
  if (mom.kind == MomentKind::kStar) g /= rho * rho;
  const Vector inv_alpha = out.alpha.cwiseInverse();
  out.pi = inv_alpha.asDiagonal() * g * inv_alpha.asDiagonal();
  out.pi = 0.5 * (out.pi + out.pi.transpose());
  return out;
}

/// Recovers (alpha, pi, rho) from exact class-sampling moments: alpha from the
/// t-system Hankel, the alpha.rho weights from the o-system Hankel, and rho's
/// within-block attribution from the cross matrix C = pi Diag(rho) (ratios
/// C_lq / C_ql fix rho up to scale; sum alpha_q rho_q fixes the scale).
inline std::pair<SbmParameters, Vector> recover_class(const MomentSequence& mom, int q) {
  if (q < 1) throw InputError("recover_class: q must be >= 1");
  if (mom.kind != MomentKind::kClass || !mom.v || !mom.cross)
    throw InputError("recover_class: class-sampling moments with u, v and cross required");
  if (mom.u.size() < 2 * q || mom.v->size() < 2 * q)
    throw InputError("recover_class: need 2Q moments");

  const Vector t_roots = detail::hankel_roots(*mom.v, q);
  const VandermondeSystem tsys(t_roots);
  const Matrix a_mat = detail::sandwich_inverse(tsys.vmatrix, detail::hankel_square(*mom.v, q));
  SbmParameters out;
  out.alpha = a_mat.diagonal();

  const Vector o_roots = detail::hankel_roots(mom.u, q);
  const VandermondeSystem osys(o_roots);
  const Matrix w_mat = detail::sandwich_inverse(osys.vmatrix, detail::hankel_square(mom.u, q));
  const double weight_sum = w_mat.diagonal().sum();  // sum_q alpha_q rho_q

  const Vector inv_alpha = out.alpha.cwiseInverse();
  const Matrix c =
      inv_alpha.asDiagonal() *
      detail::sandwich_inverse(tsys.vmatrix, *mom.cross) * inv_alpha.asDiagonal();
  // c = pi Diag(rho). Pick the best-conditioned reference row for the ratios.
  int ref = 0;
  double ref_score = -1.0;
  for (int l = 0; l < q; ++l) {
    double score = std::numeric_limits<double>::infinity();
    for (int k = 0; k < q; ++k)
      score = std::min(score, std::min(std::abs(c(k, l)), std::abs(c(l, k))));
    if (score > ref_score) {
      ref_score = score;
      ref = l;
    }
  }
  if (ref_score < 1e-12)
    throw NumericalError("recover_class: cross matrix too sparse to attribute rho");
  Vector ratio(q);
  for (int k = 0; k < q; ++k) ratio[k] = c(ref, k) / c(k, ref);  // rho_k / rho_ref
  const double scale = weight_sum / out.alpha.dot(ratio);
  Vector rho = scale * ratio;
  Matrix pi = c * rho.cwiseInverse().asDiagonal();
  out.pi = 0.5 * (pi + pi.transpose());
  return {std::move(out), std::move(rho)};
}

}  // namespace sbm
