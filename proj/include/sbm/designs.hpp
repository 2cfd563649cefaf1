// Apache License, Version 2.0, refer to LICENSE.txt
#pragma once

#include <string>
#include <variant>
#include <vector>

#include "sbm/common.hpp"
#include "sbm/model.hpp"

namespace sbm {

// The six sampling designs generating the observation mask from a complete
// network. Dyad-centered designs act on dyads directly; node-centered designs
// select nodes and reveal every incident dyad.

struct RandomDyadSampling { double rho = 1.0; };
struct StarSampling { double rho = 1.0; };
struct SnowballSampling { double rho = 1.0; int waves = 1; };
struct DoubleStandardSampling { double rho0 = 1.0; double rho1 = 1.0; };
struct StarDegreeSampling {
  double intercept = 0.0;  // a
  double slope = 0.0;      // b: selection probability logistic(a + b * degree)
};
struct ClassSampling { Vector rho; };  // one selection probability per block

using SamplingDesign = std::variant<RandomDyadSampling, StarSampling, SnowballSampling,
                                    DoubleStandardSampling, StarDegreeSampling, ClassSampling>;

enum class Centering { kDyad, kNode };
enum class Missingness { kMcar, kMar, kNmar };

inline Centering centering(const SamplingDesign& d) {
  if (std::holds_alternative<RandomDyadSampling>(d) ||
      std::holds_alternative<DoubleStandardSampling>(d))
    return Centering::kDyad;
  return Centering::kNode;
}

inline Missingness missingness(const SamplingDesign& d) {
  if (std::holds_alternative<RandomDyadSampling>(d) || std::holds_alternative<StarSampling>(d))
    return Missingness::kMcar;
  if (std::holds_alternative<SnowballSampling>(d)) return Missingness::kMar;
  return Missingness::kNmar;
}

inline int param_count(const SamplingDesign& d) {
  return std::visit(
      [](const auto& v) -> int {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, DoubleStandardSampling> ||
                      std::is_same_v<T, StarDegreeSampling>)
          return 2;
        else if constexpr (std::is_same_v<T, ClassSampling>)
          return static_cast<int>(v.rho.size());
        else
          return 1;
      },
      d);
}

inline std::string design_name(const SamplingDesign& d) {
  struct Namer {
    std::string operator()(const RandomDyadSampling&) const { return "random-dyad"; }
    std::string operator()(const StarSampling&) const { return "star"; }
    std::string operator()(const SnowballSampling&) const { return "snowball"; }
    std::string operator()(const DoubleStandardSampling&) const { return "double-standard"; }
    std::string operator()(const StarDegreeSampling&) const { return "star-degree"; }
    std::string operator()(const ClassSampling&) const { return "class"; }
  };
  return std::visit(Namer{}, d);
}

namespace detail {

inline void check_unit(double p, const char* what) {
  if (!(p >= 0.0 && p <= 1.0)) throw InputError(std::string(what) + " must lie in [0,1]");
}

inline std::vector<int> true_degrees(const ObservedNetwork& full) {
  std::vector<int> deg(full.node_count(), 0);
  full.for_each_dyad([&](int i, int j, DyadState s) {
    if (s == DyadState::kPresent) { ++deg[i]; ++deg[j]; }
  });
  return deg;
}

/// Blanks every dyad not incident to a selected node.
inline ObservedNetwork mask_by_nodes(const ObservedNetwork& full,
                                     const std::vector<char>& selected) {
  ObservedNetwork out = full;
  out.for_each_dyad([&](int i, int j, DyadState) {
    if (!selected[i] && !selected[j]) out.set_state(i, j, DyadState::kMissing);
  });
  return out;
}

}  // namespace detail

/// Applies a sampling design to a completely observed network, replacing
/// unsampled dyads by Missing.
inline ObservedNetwork apply_design(const ObservedNetwork& full, const BlockAssignment& z,
                                    const SamplingDesign& design, Rng& rng) {
  if (full.has_missing()) throw InputError("apply_design: input network must be complete");
  if (z.n() != full.node_count()) throw InputError("apply_design: labels do not match network");
  const int n = full.node_count();

  if (const auto* rd = std::get_if<RandomDyadSampling>(&design)) {
    detail::check_unit(rd->rho, "rho");
    ObservedNetwork out = full;
    out.for_each_dyad([&](int i, int j, DyadState) {
      if (!bernoulli(rd->rho, rng)) out.set_state(i, j, DyadState::kMissing);
    });
    return out;
  }
  if (const auto* st = std::get_if<StarSampling>(&design)) {
    detail::check_unit(st->rho, "rho");
    std::vector<char> sel(n, 0);
    for (int i = 0; i < n; ++i) sel[i] = bernoulli(st->rho, rng) ? 1 : 0;
    return detail::mask_by_nodes(full, sel);
  }
  if (const auto* sb = std::get_if<SnowballSampling>(&design)) {
    detail::check_unit(sb->rho, "rho");
    if (sb->waves < 1) throw InputError("snowball: waves must be >= 1");
    std::vector<char> sel(n, 0);
    for (int i = 0; i < n; ++i) sel[i] = bernoulli(sb->rho, rng) ? 1 : 0;
    std::vector<char> frontier = sel;
    for (int w = 1; w < sb->waves; ++w) {
      // Every dyad incident to the current wave is observed; its Present
      // dyads reveal the neighbors forming the next wave.
      std::vector<char> next(n, 0);
      full.for_each_dyad([&](int i, int j, DyadState s) {
        if (s != DyadState::kPresent) return;
        if (frontier[i] && !sel[j]) next[j] = 1;
        if (frontier[j] && !sel[i]) next[i] = 1;
      });
      bool grew = false;
      for (int i = 0; i < n; ++i)
        if (next[i]) { sel[i] = 1; grew = true; }
      frontier = next;
      if (!grew) break;
    }
    return detail::mask_by_nodes(full, sel);
  }
  if (const auto* ds = std::get_if<DoubleStandardSampling>(&design)) {
    detail::check_unit(ds->rho0, "rho0");
    detail::check_unit(ds->rho1, "rho1");
    ObservedNetwork out = full;
    out.for_each_dyad([&](int i, int j, DyadState s) {
      const double keep = s == DyadState::kPresent ? ds->rho1 : ds->rho0;
      if (!bernoulli(keep, rng)) out.set_state(i, j, DyadState::kMissing);
    });
    return out;
  }
  if (const auto* sd = std::get_if<StarDegreeSampling>(&design)) {
    const std::vector<int> deg = detail::true_degrees(full);
    std::vector<char> sel(n, 0);
    for (int i = 0; i < n; ++i)
      sel[i] = bernoulli(logistic(sd->intercept + sd->slope * deg[i]), rng) ? 1 : 0;
    return detail::mask_by_nodes(full, sel);
  }
  const auto& cs = std::get<ClassSampling>(design);
  if (static_cast<int>(cs.rho.size()) != z.q)
    throw InputError("class sampling: rho length must equal the block count");
  for (int q = 0; q < z.q; ++q) detail::check_unit(cs.rho[q], "rho");
  std::vector<char> sel(n, 0);
  for (int i = 0; i < n; ++i) sel[i] = bernoulli(cs.rho[z.labels[i]], rng) ? 1 : 0;
  return detail::mask_by_nodes(full, sel);
}

namespace detail {
inline double exact_log(double p) { return p > 0.0 ? std::log(p) : kNegInf; }
}  // namespace detail

/// Exact log p_psi(R | Y) given the full edge information (simulation-side
/// utility). The mask R is read off `net`; full edges come from `y_full`.
/// Node-centered designs derive the selected set as the fully observed nodes.
/// Zero-probability configurations yield -inf. Snowball is not supported.
inline double design_log_likelihood(const SamplingDesign& design, const ObservedNetwork& net,
                                    const ObservedNetwork& y_full, const BlockAssignment& z) {
  if (y_full.has_missing()) throw InputError("design_log_likelihood: y_full must be complete");
  if (net.node_count() != y_full.node_count())
    throw InputError("design_log_likelihood: network size mismatch");
  const int n = net.node_count();
  using detail::exact_log;

  if (const auto* rd = std::get_if<RandomDyadSampling>(&design)) {
    const double no = static_cast<double>(net.observed_dyad_count());
    const double nm = static_cast<double>(net.missing_dyad_count());
    return no * exact_log(rd->rho) + nm * exact_log(1.0 - rd->rho);
  }
  if (const auto* ds = std::get_if<DoubleStandardSampling>(&design)) {
    double s_o = 0, sbar_o = 0, s_m = 0, sbar_m = 0;
    net.for_each_dyad([&](int i, int j, DyadState s) {
      const bool edge = y_full.state(i, j) == DyadState::kPresent;
      if (s == DyadState::kMissing)
        (edge ? s_m : sbar_m) += 1.0;
      else
        (edge ? s_o : sbar_o) += 1.0;
    });
    return s_o * exact_log(ds->rho1) + sbar_o * exact_log(ds->rho0) +
           s_m * exact_log(1.0 - ds->rho1) + sbar_m * exact_log(1.0 - ds->rho0);
  }
  if (std::holds_alternative<SnowballSampling>(design))
    throw InputError("design_log_likelihood: no closed form wired for snowball sampling");

  const std::vector<char> sel = net.fully_observed_mask();
  if (const auto* st = std::get_if<StarSampling>(&design)) {
    double ll = 0.0;
    for (int i = 0; i < n; ++i)
      ll += sel[i] ? exact_log(st->rho) : exact_log(1.0 - st->rho);
    return ll;
  }
  if (const auto* sd = std::get_if<StarDegreeSampling>(&design)) {
    const std::vector<int> deg = detail::true_degrees(y_full);
    double ll = 0.0;
    for (int i = 0; i < n; ++i) {
      const double x = sd->intercept + sd->slope * deg[i];
      ll += sel[i] ? log_logistic(x) : log_logistic(-x);
    }
    return ll;
  }
  const auto& cs = std::get<ClassSampling>(design);
  if (z.n() != n) throw InputError("design_log_likelihood: labels do not match network");
  double ll = 0.0;
  for (int i = 0; i < n; ++i) {
    const double rho = cs.rho[z.labels[i]];
    ll += sel[i] ? exact_log(rho) : exact_log(1.0 - rho);
  }
  return ll;
}

}  // namespace sbm
