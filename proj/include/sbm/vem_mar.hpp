// Apache License, Version 2.0, refer to LICENSE.txt
#pragma once

#include <string>
#include <vector>

#include "sbm/common.hpp"
#include "sbm/model.hpp"

namespace sbm {

/// Variational responsibilities for the observed-dyads-only estimator.
struct MarState {
  Matrix tau;  // n x Q, row-stochastic
};

struct StopRule {
  double eps = 1e-6;   // max-abs change over all entries of alpha and pi
  int max_iter = 500;
  double inner_tol = 1e-6;  // fixed-point sweep tolerance on tau (and nu)
  int inner_sweeps = 50;
};

namespace detail {

/// Dense views of an observed network shared by every step of a fit.
struct ObservedContext {
  int n;
  Matrix yo;    // adjacency restricted to observed dyads
  Matrix obs;   // observed-dyad mask
  std::size_t n_obs;
  std::vector<int> touched;

  explicit ObservedContext(const ObservedNetwork& net)
      : n(net.node_count()),
        yo(net.observed_adjacency()),
        obs(net.observed_mask()),
        n_obs(net.observed_dyad_count()),
        touched(net.touched_nodes()) {}
};

inline Matrix log_pi_clamped(const Matrix& pi) {
  return pi.unaryExpr([](double p) { return std::log(clamp_prob(p)); });
}
inline Matrix log_1m_pi_clamped(const Matrix& pi) {
  return pi.unaryExpr([](double p) { return std::log1p(-clamp_prob(p)); });
}

/// Edge part of the bound over a masked dyad set:
///   1/2 sum_{q,l} [ present(q,l) log pi_ql + (weight(q,l)-present(q,l)) log(1-pi_ql) ]
/// where present = tau^t (mask .* values) tau and weight = tau^t mask tau.
/// Detects exact-0/1 pi entries contradicted by positive weight and returns
/// -inf in that case.
inline double masked_edge_bound(const Matrix& present, const Matrix& weight, const Matrix& pi) {
  const int q = static_cast<int>(pi.rows());
  double total = 0.0;
  for (int a = 0; a < q; ++a)
    for (int b = 0; b < q; ++b) {
      const double np = present(a, b);
      const double nq = weight(a, b) - np;
      const double p = pi(a, b);
      if (p <= 0.0 && np > 1e-12) return kNegInf;
      if (p >= 1.0 && nq > 1e-12) return kNegInf;
      const double pc = clamp_prob(p);
      total += np * std::log(pc) + nq * std::log1p(-pc);
    }
  return 0.5 * total;
}

/// sum_i sum_q tau_iq log(alpha_q / tau_iq).
inline double prior_entropy_term(const Matrix& tau, const Vector& alpha) {
  double total = 0.0;
  for (Eigen::Index q = 0; q < alpha.size(); ++q) {
    const double la = std::log(clamp_prob(alpha[q]));
    for (Eigen::Index i = 0; i < tau.rows(); ++i) {
      const double t = tau(i, q);
      total += t * la - xlogx(t);
    }
  }
  return total;
}

inline void validate_tau(const Matrix& tau, int n, int q) {
  if (tau.rows() != n || tau.cols() != q) throw InputError("tau has wrong shape");
}

inline double lower_bound_mar(const ObservedContext& ctx, const SbmParameters& params,
                              const Matrix& tau) {
  const Matrix present = tau.transpose() * ctx.yo * tau;
  const Matrix weight = tau.transpose() * ctx.obs * tau;
  const double edges = masked_edge_bound(present, weight, params.pi);
  if (edges == kNegInf) return kNegInf;
  return edges + prior_entropy_term(tau, params.alpha);
}

inline SbmParameters m_step_mar(const ObservedContext& ctx, const Matrix& tau,
                                std::vector<std::string>* flags) {
  if (ctx.n_obs == 0) throw InputError("m_step_mar: no observed dyads");
  const int q = static_cast<int>(tau.cols());
  SbmParameters theta;
  theta.alpha = Vector::Zero(q);
  for (int i : ctx.touched) theta.alpha += tau.row(i).transpose();
  theta.alpha /= static_cast<double>(ctx.touched.size());
  const Matrix num = tau.transpose() * ctx.yo * tau;
  const Matrix den = tau.transpose() * ctx.obs * tau;
  theta.pi = Matrix::Zero(q, q);
  for (int a = 0; a < q; ++a)
    for (int b = 0; b < q; ++b) {
      if (den(a, b) > 1e-12) {
        theta.pi(a, b) = num(a, b) / den(a, b);
      } else {
        theta.pi(a, b) = 0.5;  // neutral value for an empty block pair
        if (flags) flags->push_back("empty_block_pair");
      }
    }
  theta.pi = 0.5 * (theta.pi + theta.pi.transpose());
  return theta;
}

/// Gauss-Seidel sweeps of the tau fixed point in log space. Each row update is
/// the exact coordinate maximizer given the other rows, so the bound never
/// decreases. `extra_logits`, when non-null, adds per-(i,q) design weights.
template <typename ExtraLogits>
void tau_sweeps(const ObservedContext& ctx, const SbmParameters& params, Matrix& tau,
                const StopRule& stop, ExtraLogits&& extra_logits) {
  const int q = static_cast<int>(tau.cols());
  const Matrix lp = log_pi_clamped(params.pi);
  const Matrix lq = log_1m_pi_clamped(params.pi);
  Vector log_alpha(q);
  for (int k = 0; k < q; ++k) log_alpha[k] = std::log(clamp_prob(params.alpha[k]));
  Vector logits(q);
  for (int sweep = 0; sweep < stop.inner_sweeps; ++sweep) {
    double max_change = 0.0;
    for (int i = 0; i < ctx.n; ++i) {
      const Vector v1 = (ctx.yo.row(i) * tau).transpose();
      const Vector v0 = (ctx.obs.row(i) * tau).transpose() - v1;
      logits = log_alpha + lp * v1 + lq * v0;
      extra_logits(i, logits);
      softmax_inplace(logits);
      max_change = std::max(max_change, (logits - tau.row(i).transpose()).cwiseAbs().maxCoeff());
      tau.row(i) = logits.transpose();
    }
    if (max_change < stop.inner_tol) break;
  }
}

inline double theta_change(const SbmParameters& a, const SbmParameters& b) {
  return std::max((a.alpha - b.alpha).cwiseAbs().maxCoeff(),
                  (a.pi - b.pi).cwiseAbs().maxCoeff());
}

}  // namespace detail

/// J = sum_{(i,j) observed} sum_{q,l} tau_iq tau_jl log b(Y_ij; pi_ql)
///   + sum_i sum_q tau_iq log(alpha_q / tau_iq)
inline double lower_bound_mar(const ObservedNetwork& net, const SbmParameters& params,
                              const MarState& state) {
  detail::validate_tau(state.tau, net.node_count(), params.block_count());
  return detail::lower_bound_mar(detail::ObservedContext(net), params, state.tau);
}

/// alpha_q = mean of tau over nodes with at least one observed dyad;
/// pi_ql = weighted observed edge frequency (each unordered dyad contributes
/// both orientations, so pi is symmetric by construction).
inline SbmParameters m_step_mar(const ObservedNetwork& net, const MarState& state,
                                std::vector<std::string>* flags = nullptr) {
  return detail::m_step_mar(detail::ObservedContext(net), state.tau, flags);
}

/// Fixed-point sweeps of tau_iq ∝ alpha_q prod_{observed (i,j)} prod_l
/// b(Y_ij;pi_ql)^tau_jl, normalized per row in log space.
inline MarState ve_step_mar(const ObservedNetwork& net, const SbmParameters& params,
                            const MarState& state, const StopRule& stop = {}) {
  detail::validate_tau(state.tau, net.node_count(), params.block_count());
  MarState out = state;
  detail::tau_sweeps(detail::ObservedContext(net), params, out.tau, stop,
                     [](int, Vector&) {});
  return out;
}

inline double icl_mar(const ObservedNetwork& net, const FitResult& fit, int q);

/// Alternates M-step and VE-step on the observed dyads until the max-abs
/// change of (alpha, pi) drops below stop.eps. The bound is recorded after
/// every half-step. A network with no observed dyad yields a flagged
/// prior-only result.
inline FitResult fit_mar(const ObservedNetwork& net, int q, const Matrix& init,
                         const StopRule& stop = {}) {
  if (q < 1) throw InputError("fit_mar: q must be >= 1");
  detail::validate_tau(init, net.node_count(), q);
  const detail::ObservedContext ctx(net);
  FitResult fit;
  fit.tau = init;
  for (int i = 0; i < ctx.n; ++i) fit.tau.row(i) /= fit.tau.row(i).sum();

  if (ctx.n_obs == 0) {
    fit.theta.alpha = fit.tau.colwise().mean().transpose();
    fit.theta.pi = Matrix::Constant(q, q, 0.5);
    fit.flags.push_back("degenerate_no_observed_dyads");
    return fit;
  }

  fit.theta = detail::m_step_mar(ctx, fit.tau, &fit.flags);
  fit.bound_trace.push_back(detail::lower_bound_mar(ctx, fit.theta, fit.tau));
  for (int iter = 0; iter < stop.max_iter; ++iter) {
    detail::tau_sweeps(ctx, fit.theta, fit.tau, stop, [](int, Vector&) {});
    fit.bound_trace.push_back(detail::lower_bound_mar(ctx, fit.theta, fit.tau));
    SbmParameters next = detail::m_step_mar(ctx, fit.tau, &fit.flags);
    const double change = detail::theta_change(next, fit.theta);
    fit.theta = next;
    fit.bound_trace.push_back(detail::lower_bound_mar(ctx, fit.theta, fit.tau));
    if (change < stop.eps) break;
  }
  fit.icl = icl_mar(net, fit, q);
  return fit;
}

/// ICL(Q) = -2 E[log p(Y^o, Z; Q)] + Q(Q+1)/2 log|D^o| + (Q-1) log|N^o|,
/// with Z hardened to the MAP of tau (each dyad counted once).
inline double icl_mar(const ObservedNetwork& net, const FitResult& fit, int q) {
  const std::size_t n_obs = net.observed_dyad_count();
  if (n_obs == 0) throw InputError("icl_mar: no observed dyads");
  const std::vector<int> z = fit.hard_labels();
  double e = 0.0;
  net.for_each_dyad([&](int i, int j, DyadState s) {
    if (s == DyadState::kMissing) return;
    const double y = s == DyadState::kPresent ? 1.0 : 0.0;
    e += log_bernoulli(y, clamp_prob(fit.theta.pi(z[i], z[j])));
  });
  for (int i = 0; i < net.node_count(); ++i) e += std::log(clamp_prob(fit.theta.alpha[z[i]]));
  const double n_touched = static_cast<double>(net.touched_nodes().size());
  const double pen = 0.5 * q * (q + 1) * std::log(static_cast<double>(n_obs)) +
                     (q - 1) * std::log(n_touched);
  return -2.0 * e + pen;
}

}  // namespace sbm
