// Apache License, Version 2.0, refer to LICENSE.txt
#pragma once

#include <string>
#include <utility>
#include <vector>

#include "sbm/common.hpp"
#include "sbm/designs.hpp"
#include "sbm/model.hpp"
#include "sbm/vem_mar.hpp"

namespace sbm {

enum class NmarFamily { kDoubleStandard, kClass, kStarDegree };

/// Variational state of the double mean-field estimator: multinomial tau per
/// node, Bernoulli nu per missing dyad, and (star degree only) one positive
/// bound parameter zeta per node.
struct NmarState {
  Matrix tau;   // n x Q
  Matrix nu;    // n x n symmetric, meaningful on missing dyads
  Vector zeta;  // length n, star degree only
};

/// Observed edge counts and their variational counterparts on missing dyads.
struct DyadStats {
  double s_obs = 0;     // present observed dyads
  double sbar_obs = 0;  // absent observed dyads
  double s_miss = 0;    // sum of nu over missing dyads
  double sbar_miss = 0; // sum of (1 - nu)
};

/// Expected degrees under the variational distribution:
/// d_tilde_i = E[D_i], d2_tilde_i = E[D_i^2] = Var(D_i) + E[D_i]^2.
struct DegreeStats {
  Vector d_tilde;
  Vector d2_tilde;

  double minus(int k, double nu_kl) const { return d_tilde[k] - nu_kl; }
};

inline DyadStats dyad_stats(const ObservedNetwork& net, const Matrix& nu) {
  DyadStats st;
  net.for_each_dyad([&](int i, int j, DyadState s) {
    if (s == DyadState::kMissing) {
      st.s_miss += nu(i, j);
      st.sbar_miss += 1.0 - nu(i, j);
    } else {
      (s == DyadState::kPresent ? st.s_obs : st.sbar_obs) += 1.0;
    }
  });
  return st;
}

inline DegreeStats degree_stats(const ObservedNetwork& net, const Matrix& nu) {
  const int n = net.node_count();
  DegreeStats st;
  st.d_tilde = Vector::Zero(n);
  Vector var = Vector::Zero(n);
  net.for_each_dyad([&](int i, int j, DyadState s) {
    if (s == DyadState::kMissing) {
      const double v = nu(i, j);
      st.d_tilde[i] += v;
      st.d_tilde[j] += v;
      var[i] += v * (1.0 - v);
      var[j] += v * (1.0 - v);
    } else if (s == DyadState::kPresent) {
      st.d_tilde[i] += 1.0;
      st.d_tilde[j] += 1.0;
    }
  });
  st.d2_tilde = var + st.d_tilde.cwiseProduct(st.d_tilde);
  return st;
}

namespace detail {

struct NmarContext {
  ObservedContext base;
  Matrix mis;  // missing-dyad mask
  std::vector<std::pair<int, int>> missing;
  std::vector<char> selected;  // fully observed nodes ("directly sampled")
  int n_unselected = 0;
  double s_obs = 0.0;     // present observed dyads
  double sbar_obs = 0.0;  // absent observed dyads

  explicit NmarContext(const ObservedNetwork& net)
      : base(net), mis(net.missing_mask()), missing(net.missing_dyads()),
        selected(net.fully_observed_mask()) {
    for (char c : selected)
      if (!c) ++n_unselected;
    s_obs = static_cast<double>(net.observed_edge_count());
    sbar_obs = static_cast<double>(net.observed_dyad_count()) - s_obs;
  }
};

/// SBM part of the NMAR bound: observed and nu-completed edge terms, the
/// tau prior/entropy term, and the Bernoulli entropies of nu.
inline double sbm_bound_part(const NmarContext& ctx, const SbmParameters& params,
                             const Matrix& tau, const Matrix& nu) {
  const Matrix present_o = tau.transpose() * ctx.base.yo * tau;
  const Matrix weight_o = tau.transpose() * ctx.base.obs * tau;
  const double obs_part = masked_edge_bound(present_o, weight_o, params.pi);
  if (obs_part == kNegInf) return kNegInf;
  const Matrix present_m = tau.transpose() * ctx.mis.cwiseProduct(nu) * tau;
  const Matrix weight_m = tau.transpose() * ctx.mis * tau;
  const double mis_part = masked_edge_bound(present_m, weight_m, params.pi);
  if (mis_part == kNegInf) return kNegInf;
  double entropy = 0.0;
  for (const auto& [i, j] : ctx.missing) entropy += bernoulli_entropy(nu(i, j));
  return obs_part + mis_part + prior_entropy_term(tau, params.alpha) + entropy;
}

inline double design_term_double_standard(const DyadStats& st, double rho0, double rho1) {
  const double r0 = clamp_prob(rho0), r1 = clamp_prob(rho1);
  return st.s_obs * std::log(r1) + st.sbar_obs * std::log(r0) +
         st.s_miss * std::log1p(-r1) + st.sbar_miss * std::log1p(-r0);
}

inline double design_term_class(const NmarContext& ctx, const Matrix& tau, const Vector& rho) {
  const int q = static_cast<int>(rho.size());
  Vector log_r(q), log_1mr(q);
  for (int k = 0; k < q; ++k) {
    log_r[k] = std::log(clamp_prob(rho[k]));
    log_1mr[k] = std::log1p(-clamp_prob(rho[k]));
  }
  double total = 0.0;
  for (int i = 0; i < ctx.base.n; ++i)
    total += tau.row(i).dot((ctx.selected[i] ? log_r : log_1mr).transpose());
  return total;
}

/// Quadratic-bound surrogate for E[log p(R | Y)] under star degree sampling:
/// -sum_{i unselected} (a + b d_tilde_i)
/// + sum_i [ log logistic(zeta_i) + (a + b d_tilde_i - zeta_i)/2
///           + h(zeta_i) (a^2 + 2ab d_tilde_i + b^2 d2_tilde_i - zeta_i^2) ]
inline double design_term_star_degree(const NmarContext& ctx, double a, double b,
                                      const Vector& zeta, const DegreeStats& st) {
  if (zeta.size() != ctx.base.n)
    throw InputError("star degree bound: zeta must hold one value per node");
  double total = 0.0;
  for (int i = 0; i < ctx.base.n; ++i) {
    if (zeta[i] < 0.0) throw InputError("star degree bound: zeta must be >= 0");
    const double x = a + b * st.d_tilde[i];
    if (!ctx.selected[i]) total -= x;
    total += log_logistic(zeta[i]) + 0.5 * (x - zeta[i]) +
             jaakkola_h(zeta[i]) *
                 (a * a + 2.0 * a * b * st.d_tilde[i] + b * b * st.d2_tilde[i] -
                  zeta[i] * zeta[i]);
  }
  return total;
}

inline double lower_bound_nmar(const NmarContext& ctx, const SbmParameters& params,
                               const std::vector<double>& psi, const NmarState& state,
                               NmarFamily family) {
  const double sbm_part = sbm_bound_part(ctx, params, state.tau, state.nu);
  if (sbm_part == kNegInf) return kNegInf;
  switch (family) {
    case NmarFamily::kDoubleStandard: {
      DyadStats stats;
      stats.s_obs = ctx.s_obs;
      stats.sbar_obs = ctx.sbar_obs;
      for (const auto& [i, j] : ctx.missing) {
        stats.s_miss += state.nu(i, j);
        stats.sbar_miss += 1.0 - state.nu(i, j);
      }
      return sbm_part + design_term_double_standard(stats, psi.at(0), psi.at(1));
    }
    case NmarFamily::kClass: {
      Vector rho = Eigen::Map<const Vector>(psi.data(), psi.size());
      return sbm_part + design_term_class(ctx, state.tau, rho);
    }
    case NmarFamily::kStarDegree: {
      // Recomputed from nu so the bound is a function of the state alone.
      DegreeStats st;
      st.d_tilde = Vector::Zero(ctx.base.n);
      Vector var = Vector::Zero(ctx.base.n);
      for (int i = 0; i < ctx.base.n; ++i)
        st.d_tilde[i] = ctx.base.yo.row(i).sum();
      for (const auto& [i, j] : ctx.missing) {
        const double v = state.nu(i, j);
        st.d_tilde[i] += v;
        st.d_tilde[j] += v;
        var[i] += v * (1.0 - v);
        var[j] += v * (1.0 - v);
      }
      st.d2_tilde = var + st.d_tilde.cwiseProduct(st.d_tilde);
      return sbm_part + design_term_star_degree(ctx, psi.at(0), psi.at(1), state.zeta, st);
    }
  }
  throw InputError("lower_bound_nmar: unknown family");
}

}  // namespace detail

/// Variational lower bound of log p(Y^o, R); the design term dispatches per
/// family (star degree uses the quadratic logistic bound, so state.zeta must
/// be set).
inline double lower_bound_nmar(const ObservedNetwork& net, const SbmParameters& params,
                               const std::vector<double>& psi, const NmarState& state,
                               NmarFamily family) {
  detail::validate_tau(state.tau, net.node_count(), params.block_count());
  return detail::lower_bound_nmar(detail::NmarContext(net), params, psi, state, family);
}

/// alpha_q = (1/n) sum_i tau_iq; pi pools observed edges and nu-completed
/// missing dyads over the full dyad set.
inline SbmParameters m_step_theta(const ObservedNetwork& net, const NmarState& state,
                                  std::vector<std::string>* flags = nullptr) {
  const int n = net.node_count();
  const int q = static_cast<int>(state.tau.cols());
  detail::validate_tau(state.tau, n, q);
  SbmParameters theta;
  theta.alpha = state.tau.colwise().mean().transpose();
  const Matrix values = net.observed_adjacency() + net.missing_mask().cwiseProduct(state.nu);
  const Matrix all_pairs = Matrix::Ones(n, n) - Matrix::Identity(n, n);
  const Matrix num = state.tau.transpose() * values * state.tau;
  const Matrix den = state.tau.transpose() * all_pairs * state.tau;
  theta.pi = Matrix::Zero(q, q);
  for (int a = 0; a < q; ++a)
    for (int b = 0; b < q; ++b) {
      if (den(a, b) > 1e-12) {
        theta.pi(a, b) = num(a, b) / den(a, b);
      } else {
        theta.pi(a, b) = 0.5;
        if (flags) flags->push_back("empty_block_pair");
      }
    }
  theta.pi = 0.5 * (theta.pi + theta.pi.transpose());
  return theta;
}

/// Design weights for the tau update: all ones except for class sampling,
/// where lambda_iq = rho_q for selected nodes and 1 - rho_q otherwise.
inline Matrix class_lambda(const ObservedNetwork& net, const Vector& rho) {
  const int n = net.node_count();
  const std::vector<char> sel = net.fully_observed_mask();
  Matrix lambda(n, static_cast<int>(rho.size()));
  for (int i = 0; i < n; ++i)
    for (int q = 0; q < rho.size(); ++q)
      lambda(i, q) = sel[i] ? rho[q] : 1.0 - rho[q];
  return lambda;
}

/// tau_iq ∝ lambda_iq alpha_q [observed product] [nu-completed product],
/// solved by Gauss-Seidel fixed-point sweeps in log space.
inline Matrix ve_step_tau(const ObservedNetwork& net, const SbmParameters& params,
                          const NmarState& state, const Matrix& lambda,
                          const StopRule& stop = {}) {
  const int n = net.node_count();
  const int q = params.block_count();
  detail::validate_tau(state.tau, n, q);
  if (lambda.rows() != n || lambda.cols() != q)
    throw InputError("ve_step_tau: lambda has wrong shape");
  Matrix log_lambda(n, q);
  for (int i = 0; i < n; ++i) {
    if (lambda.row(i).maxCoeff() <= 0.0)
      throw InputError("ve_step_tau: lambda row is entirely zero");
    for (int k = 0; k < q; ++k)
      log_lambda(i, k) = lambda(i, k) > 0.0 ? std::log(lambda(i, k)) : kNegInf;
  }
  const detail::NmarContext ctx(net);
  const Matrix mis_nu = ctx.mis.cwiseProduct(state.nu);
  const Matrix lp = detail::log_pi_clamped(params.pi);
  const Matrix lq = detail::log_1m_pi_clamped(params.pi);
  Matrix tau = state.tau;
  detail::tau_sweeps(ctx.base, params, tau, stop, [&](int i, Vector& logits) {
    const Vector vm1 = (mis_nu.row(i) * tau).transpose();
    const Vector vm0 = (ctx.mis.row(i) * tau).transpose() - vm1;
    logits += lp * vm1 + lq * vm0 + log_lambda.row(i).transpose();
  });
  return tau;
}

/// rho1 = S^o / (S^o + s^m), rho0 = Sbar^o / (Sbar^o + sbar^m);
/// zero denominators fall back to 1/2 with a degeneracy flag.
inline std::pair<double, double> update_psi_double_standard(
    const DyadStats& st, std::vector<std::string>* flags = nullptr) {
  double rho0 = 0.5, rho1 = 0.5;
  if (st.sbar_obs + st.sbar_miss > 0.0) {
    rho0 = st.sbar_obs / (st.sbar_obs + st.sbar_miss);
  } else if (flags) {
    flags->push_back("double_standard_rho0_degenerate");
  }
  if (st.s_obs + st.s_miss > 0.0) {
    rho1 = st.s_obs / (st.s_obs + st.s_miss);
  } else if (flags) {
    flags->push_back("double_standard_rho1_degenerate");
  }
  return {rho0, rho1};
}

/// nu_ij = logistic( log((1-rho1)/(1-rho0)) + sum_ql tau_iq tau_jl logit pi_ql ).
inline Matrix update_nu_double_standard(const ObservedNetwork& net, const SbmParameters& params,
                                        double rho0, double rho1, const Matrix& tau) {
  const double offset = std::log1p(-clamp_prob(rho1)) - std::log1p(-clamp_prob(rho0));
  Matrix g = params.pi.unaryExpr([](double p) { return logit(p); });
  const Matrix tau_g = tau * g;
  Matrix nu = Matrix::Zero(net.node_count(), net.node_count());
  net.for_each_dyad([&](int i, int j, DyadState s) {
    if (s != DyadState::kMissing) return;
    const double v = logistic(offset + tau_g.row(i).dot(tau.row(j)));
    nu(i, j) = v;
    nu(j, i) = v;
  });
  return nu;
}

/// rho_q = sum_{selected} tau_iq / sum_all tau_iq.
inline Vector update_psi_class(const Matrix& tau, const std::vector<char>& selected,
                               std::vector<std::string>* flags = nullptr) {
  const int q = static_cast<int>(tau.cols());
  Vector num = Vector::Zero(q);
  for (int i = 0; i < tau.rows(); ++i)
    if (selected[i]) num += tau.row(i).transpose();
  const Vector den = tau.colwise().sum().transpose();
  Vector rho(q);
  for (int k = 0; k < q; ++k) {
    if (den[k] > 1e-12) {
      rho[k] = num[k] / den[k];
    } else {
      rho[k] = 0.5;
      if (flags) flags->push_back("class_rho_degenerate");
    }
  }
  return rho;
}

/// nu_ij = logistic( sum_ql tau_iq tau_jl logit pi_ql ); no design offset.
inline Matrix update_nu_class(const ObservedNetwork& net, const SbmParameters& params,
                              const Matrix& tau) {
  return update_nu_double_standard(net, params, 0.5, 0.5, tau);
}

/// Full star-degree bound J_{tau,nu,zeta,theta,psi} with caller-provided
/// degree statistics.
inline double lower_bound_star_degree(const ObservedNetwork& net, const SbmParameters& params,
                                      double a, double b, const NmarState& state,
                                      const DegreeStats& stats) {
  const detail::NmarContext ctx(net);
  const double sbm_part = detail::sbm_bound_part(ctx, params, state.tau, state.nu);
  if (sbm_part == kNegInf) return kNegInf;
  return sbm_part + detail::design_term_star_degree(ctx, a, b, state.zeta, stats);
}

/// Exact maximizer of the quadratic star-degree bound in (a, b): solves
///   2a sum h + 2b sum h d_tilde        = |N^m| - n/2
///   2a sum h d_tilde + 2b sum h d2     = sum_{N^m} d_tilde - (1/2) sum d_tilde
/// A near-singular system (all expected degrees equal) keeps the previous psi
/// and raises a flag.
inline std::pair<double, double> update_psi_star_degree(
    const DegreeStats& stats, const Vector& zeta, const std::vector<char>& selected,
    std::pair<double, double> previous, std::vector<std::string>* flags = nullptr) {
  const int n = static_cast<int>(zeta.size());
  double sh = 0.0, shd = 0.0, shd2 = 0.0, sum_d = 0.0, sum_d_miss = 0.0;
  int n_unselected = 0;
  for (int i = 0; i < n; ++i) {
    const double h = jaakkola_h(zeta[i]);
    sh += h;
    shd += h * stats.d_tilde[i];
    shd2 += h * stats.d2_tilde[i];
    sum_d += stats.d_tilde[i];
    if (!selected[i]) {
      sum_d_miss += stats.d_tilde[i];
      ++n_unselected;
    }
  }
  const double rhs_a = n_unselected - 0.5 * n;
  const double rhs_b = sum_d_miss - 0.5 * sum_d;
  const double det = sh * shd2 - shd * shd;
  if (std::abs(det) < 1e-12) {
    if (flags) flags->push_back("star_degree_psi_degenerate");
    return previous;
  }
  const double a = 0.5 * (shd2 * rhs_a - shd * rhs_b) / det;
  const double b = 0.5 * (sh * rhs_b - shd * rhs_a) / det;
  return {a, b};
}

/// zeta_i = sqrt(a^2 + b^2 E[D_i^2] + 2ab E[D_i]), floored at 1e-8. The
/// radicand is E[(a + b D_i)^2] and therefore nonnegative.
inline Vector update_zeta(double a, double b, const DegreeStats& stats) {
  Vector zeta(stats.d_tilde.size());
  for (Eigen::Index i = 0; i < zeta.size(); ++i) {
    const double r = a * a + b * b * stats.d2_tilde[i] + 2.0 * a * b * stats.d_tilde[i];
    zeta[i] = std::sqrt(std::max(r, 0.0));
    if (zeta[i] < 1e-8) zeta[i] = 1e-8;
  }
  return zeta;
}

/// Coordinate maximizer of the star-degree bound in nu_ij given every other
/// coordinate (d_tilde holds the current expected degrees including nu_ij):
/// logit nu_ij = sum_ql tau tau logit pi - b
///   + 2 h(zeta_i) ab + h(zeta_i) b^2 (1 + 2 (d_tilde_i - nu_ij))
///   + 2 h(zeta_j) ab + h(zeta_j) b^2 (1 + 2 (d_tilde_j - nu_ij))
inline double star_degree_nu_logit(double edge_logit, double a, double b, double h_i, double h_j,
                                   double d_minus_i, double d_minus_j) {
  return edge_logit - b + 2.0 * h_i * a * b + h_i * b * b * (1.0 + 2.0 * d_minus_i) +
         2.0 * h_j * a * b + h_j * b * b * (1.0 + 2.0 * d_minus_j);
}

/// Gauss-Seidel sweeps over the missing dyads in lexicographic order; expected
/// degrees are maintained incrementally. Returns the updated nu matrix.
inline Matrix update_nu_star_degree(const ObservedNetwork& net, const SbmParameters& params,
                                    double a, double b, const Matrix& tau, const Vector& zeta,
                                    const Matrix& nu_in, int sweeps = 1,
                                    double tol = 0.0) {
  Matrix g = params.pi.unaryExpr([](double p) { return logit(p); });
  const Matrix tau_g = tau * g;
  Matrix nu = nu_in;
  DegreeStats stats = degree_stats(net, nu);
  Vector h(zeta.size());
  for (Eigen::Index i = 0; i < zeta.size(); ++i) h[i] = jaakkola_h(zeta[i]);
  const auto missing = net.missing_dyads();
  for (int sweep = 0; sweep < sweeps; ++sweep) {
    double max_change = 0.0;
    for (const auto& [i, j] : missing) {
      const double old = nu(i, j);
      const double arg = star_degree_nu_logit(tau_g.row(i).dot(tau.row(j)), a, b, h[i], h[j],
                                              stats.d_tilde[i] - old, stats.d_tilde[j] - old);
      const double v = logistic(arg);
      nu(i, j) = v;
      nu(j, i) = v;
      stats.d_tilde[i] += v - old;
      stats.d_tilde[j] += v - old;
      max_change = std::max(max_change, std::abs(v - old));
    }
    if (max_change <= tol) break;
  }
  return nu;
}

inline double icl_nmar(const ObservedNetwork& net, const FitResult& fit, int q,
                       NmarFamily family);

/// Double mean-field VEM: per iteration theta, psi, (zeta,) tau, nu, with the
/// tracked bound recorded after every sub-step, until the theta change drops
/// below stop.eps.
inline FitResult fit_nmar(const ObservedNetwork& net, int q, NmarFamily family,
                          const Matrix& init, const StopRule& stop = {}) {
  if (q < 1) throw InputError("fit_nmar: q must be >= 1");
  detail::validate_tau(init, net.node_count(), q);
  const detail::NmarContext ctx(net);
  const int n = ctx.base.n;

  NmarState state;
  state.tau = init;
  for (int i = 0; i < n; ++i) state.tau.row(i) /= state.tau.row(i).sum();
  if (ctx.base.n_obs > 0 && !ctx.missing.empty()) {
    // Warm start from the observed-dyads-only fixed point: with a large
    // missing fraction the nu-coupled terms otherwise swamp the observed
    // signal in the first sweeps and every generic start can fall into a
    // uniform basin far below the structured optimum.
    std::vector<std::string> warm_flags;
    const detail::ObservedContext& octx = ctx.base;
    SbmParameters warm_theta = detail::m_step_mar(octx, state.tau, &warm_flags);
    for (int iter = 0; iter < stop.max_iter; ++iter) {
      detail::tau_sweeps(octx, warm_theta, state.tau, stop, [](int, Vector&) {});
      const SbmParameters next = detail::m_step_mar(octx, state.tau, &warm_flags);
      const double change = detail::theta_change(next, warm_theta);
      warm_theta = next;
      if (change < stop.eps) break;
    }
    state.nu = update_nu_class(net, warm_theta, state.tau);
  } else {
    const double density =
        ctx.base.n_obs > 0
            ? clamp_prob(net.observed_edge_count() / static_cast<double>(ctx.base.n_obs))
            : 0.5;
    state.nu = Matrix::Zero(n, n);
    for (const auto& [i, j] : ctx.missing) {
      state.nu(i, j) = density;
      state.nu(j, i) = density;
    }
  }

  FitResult fit;
  std::vector<double> psi;
  switch (family) {
    case NmarFamily::kDoubleStandard:
      psi = {0.5, 0.5};
      break;
    case NmarFamily::kClass:
      psi.assign(q, 0.5);
      break;
    case NmarFamily::kStarDegree: {
      const int n_sel = n - ctx.n_unselected;
      psi = {logit(n_sel / static_cast<double>(n)), 0.0};
      state.zeta = update_zeta(psi[0], psi[1], degree_stats(net, state.nu));
      break;
    }
  }

  auto bound = [&]() { return detail::lower_bound_nmar(ctx, fit.theta, psi, state, family); };
  auto record = [&]() { fit.bound_trace.push_back(bound()); };

  fit.theta = m_step_theta(net, state, &fit.flags);
  record();
  for (int iter = 0; iter < stop.max_iter; ++iter) {
    switch (family) {
      case NmarFamily::kDoubleStandard: {
        const auto [r0, r1] = update_psi_double_standard(dyad_stats(net, state.nu), &fit.flags);
        psi = {r0, r1};
        record();
        state.tau = ve_step_tau(net, fit.theta, state, Matrix::Ones(n, q), stop);
        record();
        state.nu = update_nu_double_standard(net, fit.theta, psi[0], psi[1], state.tau);
        record();
        break;
      }
      case NmarFamily::kClass: {
        const Vector rho = update_psi_class(state.tau, ctx.selected, &fit.flags);
        psi.assign(rho.data(), rho.data() + rho.size());
        record();
        state.tau = ve_step_tau(net, fit.theta, state, class_lambda(net, rho), stop);
        record();
        state.nu = update_nu_class(net, fit.theta, state.tau);
        record();
        break;
      }
      case NmarFamily::kStarDegree: {
        DegreeStats stats = degree_stats(net, state.nu);
        const auto [a, b] =
            update_psi_star_degree(stats, state.zeta, ctx.selected, {psi[0], psi[1]}, &fit.flags);
        psi = {a, b};
        record();
        state.zeta = update_zeta(a, b, stats);
        record();
        state.tau = ve_step_tau(net, fit.theta, state, Matrix::Ones(n, q), stop);
        record();
        state.nu = update_nu_star_degree(net, fit.theta, a, b, state.tau, state.zeta, state.nu,
                                         stop.inner_sweeps, stop.inner_tol);
        record();
        break;
      }
    }
    SbmParameters next = m_step_theta(net, state, &fit.flags);
    const double change = detail::theta_change(next, fit.theta);
    fit.theta = next;
    record();
    if (change < stop.eps) break;
  }

  fit.psi = psi;
  fit.tau = state.tau;
  fit.nu = state.nu;
  fit.zeta = state.zeta;
  fit.icl = icl_nmar(net, fit, q, family);
  return fit;
}

namespace detail {

/// Completed-data term of the ICL: Z hardened to the MAP of tau, Y^m kept
/// soft through nu with its Bernoulli entropy included, so each missing dyad
/// contributes its marginalized likelihood (at the optimal nu the edge term
/// plus entropy collapses to log sums like log[(1-rho1) pi + (1-rho0)(1-pi)]).
/// Without the entropy the criterion would reward a design for merely making
/// its own imputations more confident, and design selection breaks down.
/// The design part is supplied by the caller.
inline double hardened_completed_loglik(const ObservedNetwork& net, const FitResult& fit) {
  const std::vector<int> z = fit.hard_labels();
  double e = 0.0;
  net.for_each_dyad([&](int i, int j, DyadState s) {
    const double p = clamp_prob(fit.theta.pi(z[i], z[j]));
    if (s == DyadState::kMissing) {
      const double v = fit.nu(i, j);
      e += v * std::log(p) + (1.0 - v) * std::log1p(-p) + bernoulli_entropy(v);
    } else {
      e += log_bernoulli(s == DyadState::kPresent ? 1.0 : 0.0, p);
    }
  });
  for (int i = 0; i < net.node_count(); ++i) e += std::log(clamp_prob(fit.theta.alpha[z[i]]));
  return e;
}

inline double icl_penalty(int n, int q, int k, Centering centering) {
  const double log_dyads = std::log(n * (n - 1) / 2.0);
  const double log_nodes = std::log(static_cast<double>(n));
  if (centering == Centering::kDyad)
    return (k + 0.5 * q * (q + 1)) * log_dyads + (q - 1) * log_nodes;
  return 0.5 * q * (q + 1) * log_dyads + (k + q - 1) * log_nodes;
}

}  // namespace detail

/// ICL for NMAR fits: completed-data expectation (hardened Z, soft nu) plus a
/// penalty that books dyad-centered design parameters against the dyad count
/// and node-centered ones against the node count.
inline double icl_nmar(const ObservedNetwork& net, const FitResult& fit, int q,
                       NmarFamily family) {
  const int n = net.node_count();
  if (n < 2) throw InputError("icl_nmar: need at least two nodes");
  double design = 0.0;
  int k = 0;
  Centering cent = Centering::kDyad;
  switch (family) {
    case NmarFamily::kDoubleStandard: {
      design = detail::design_term_double_standard(dyad_stats(net, fit.nu), fit.psi.at(0),
                                                   fit.psi.at(1));
      k = 2;
      cent = Centering::kDyad;
      break;
    }
    case NmarFamily::kClass: {
      const std::vector<char> sel = net.fully_observed_mask();
      const std::vector<int> z = fit.hard_labels();
      for (int i = 0; i < n; ++i) {
        const double rho = clamp_prob(fit.psi.at(z[i]));
        design += sel[i] ? std::log(rho) : std::log1p(-rho);
      }
      k = q;
      cent = Centering::kNode;
      break;
    }
    case NmarFamily::kStarDegree: {
      const detail::NmarContext ctx(net);
      design = detail::design_term_star_degree(ctx, fit.psi.at(0), fit.psi.at(1), fit.zeta,
                                               degree_stats(net, fit.nu));
      k = 2;
      cent = Centering::kNode;
      break;
    }
  }
  const double e = detail::hardened_completed_loglik(net, fit) + design;
  return -2.0 * e + detail::icl_penalty(n, q, k, cent);
}

/// ICL of a MAR fit put on the completed-data scale for design selection:
/// the mask is modeled as random-dyad (K=1, rho = |D^o|/|D|, independent of
/// the data values), the fit is polished under the completed objective
/// (theta, tau and the offset-free nu co-adapt exactly as the NMAR fits do,
/// so the comparison is a nested one), and the dyad-centered penalty applies.
inline double icl_mar_comparator(const ObservedNetwork& net, const FitResult& mar_fit, int q,
                                 const StopRule& stop = {}) {
  const int n = net.node_count();
  if (n < 2) throw InputError("icl_mar_comparator: need at least two nodes");
  FitResult completed = mar_fit;
  completed.nu = update_nu_class(net, mar_fit.theta, mar_fit.tau);
  if (net.has_missing()) {
    NmarState state{completed.tau, completed.nu, {}};
    SbmParameters theta = completed.theta;
    const Matrix ones = Matrix::Ones(n, q);
    for (int iter = 0; iter < stop.max_iter; ++iter) {
      const SbmParameters next = m_step_theta(net, state);
      const double change = detail::theta_change(next, theta);
      theta = next;
      state.tau = ve_step_tau(net, theta, state, ones, stop);
      state.nu = update_nu_class(net, theta, state.tau);
      if (change < stop.eps) break;
    }
    completed.theta = theta;
    completed.tau = state.tau;
    completed.nu = state.nu;
  }
  const double n_obs = static_cast<double>(net.observed_dyad_count());
  const double n_mis = static_cast<double>(net.missing_dyad_count());
  const double rho = clamp_prob(n_obs / (n_obs + n_mis));
  double design = 0.0;
  if (n_obs > 0) design += n_obs * std::log(rho);
  if (n_mis > 0) design += n_mis * std::log1p(-rho);
  const double e = detail::hardened_completed_loglik(net, completed) + design;
  return -2.0 * e + detail::icl_penalty(n, q, 1, Centering::kDyad);
}

}  // namespace sbm
