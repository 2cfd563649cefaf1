// Apache License, Version 2.0, refer to LICENSE.txt
#pragma once

#include <cstdio>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "sbm/common.hpp"
#include "sbm/designs.hpp"
#include "sbm/init.hpp"
#include "sbm/io.hpp"
#include "sbm/metrics.hpp"
#include "sbm/model.hpp"
#include "sbm/vem_mar.hpp"
#include "sbm/vem_nmar.hpp"

namespace sbm {

// ---------------------------------------------------------------------------
// Benchmark topologies: connectivity matrices parameterized by a contrast
// epsilon, with their conventional block proportions.
// ---------------------------------------------------------------------------

enum class Topology { kAffiliation, kStarTopology, kBipartite };

inline Topology topology_from_name(const std::string& name) {
  if (name == "affiliation") return Topology::kAffiliation;
  if (name == "star") return Topology::kStarTopology;
  if (name == "bipartite") return Topology::kBipartite;
  throw InputError("unknown topology '" + name + "'");
}

inline std::string topology_name(Topology t) {
  switch (t) {
    case Topology::kAffiliation: return "affiliation";
    case Topology::kStarTopology: return "star";
    case Topology::kBipartite: return "bipartite";
  }
  return "";
}

inline SbmParameters topology_parameters(Topology t, double eps) {
  SbmParameters p;
  switch (t) {
    case Topology::kAffiliation: {
      p.alpha = Vector::Constant(3, 1.0 / 3.0);
      p.pi = Matrix::Constant(3, 3, eps);
      p.pi.diagonal().setConstant(1.0 - eps);
      break;
    }
    case Topology::kStarTopology: {
      p.alpha.resize(4);
      p.alpha << 1.0 / 6.0, 1.0 / 3.0, 1.0 / 6.0, 1.0 / 3.0;
      const double c = 1.0 - eps;
      p.pi.resize(4, 4);
      p.pi << c, c, 0, 0,
              c, 0, eps, 0,
              0, eps, c, c,
              0, 0, c, 0;
      break;
    }
    case Topology::kBipartite: {
      p.alpha = Vector::Constant(4, 0.25);
      const double c = 1.0 - eps;
      p.pi.resize(4, 4);
      p.pi << eps, c, eps, eps,
              c, eps, eps, eps,
              eps, eps, eps, c,
              eps, eps, c, eps;
      break;
    }
  }
  return p;
}

// ---------------------------------------------------------------------------
// Fitting front end: restart generation and best-of-restarts dispatch.
// ---------------------------------------------------------------------------

enum class FitMethod { kMar, kDoubleStandard, kClass, kStarDegree };

inline FitMethod method_from_name(const std::string& name) {
  if (name == "mar") return FitMethod::kMar;
  if (name == "double-standard") return FitMethod::kDoubleStandard;
  if (name == "class") return FitMethod::kClass;
  if (name == "star-degree") return FitMethod::kStarDegree;
  throw InputError("unknown method '" + name + "'");
}

inline std::string method_name(FitMethod m) {
  switch (m) {
    case FitMethod::kMar: return "mar";
    case FitMethod::kDoubleStandard: return "double-standard";
    case FitMethod::kClass: return "class";
    case FitMethod::kStarDegree: return "star-degree";
  }
  return "";
}

struct FitOptions {
  int restarts = 10;
  std::uint64_t seed = 0;
  StopRule stop;
};

/// Half random Dirichlet rows, half spectral with increasing perturbation
/// (the first spectral restart is unperturbed).
inline std::vector<Matrix> make_restart_inits(const ObservedNetwork& net, int q, int restarts,
                                              Rng& rng) {
  const int n = net.node_count();
  std::vector<Matrix> inits;
  inits.reserve(restarts);
  const int n_spectral = restarts / 2;
  const int n_random = restarts - n_spectral;
  for (int r = 0; r < n_random; ++r) inits.push_back(random_responsibilities(n, q, rng));
  if (n_spectral > 0) {
    const Matrix spectral = init_clustering(net, q, InitStrategy::kSpectral, rng);
    inits.push_back(spectral);
    for (int r = 1; r < n_spectral; ++r) {
      Matrix perturbed = 0.75 * spectral + 0.25 * random_responsibilities(n, q, rng);
      for (int i = 0; i < n; ++i) perturbed.row(i) /= perturbed.row(i).sum();
      inits.push_back(std::move(perturbed));
    }
  }
  return inits;
}

inline FitResult fit_one(const ObservedNetwork& net, int q, FitMethod method, const Matrix& init,
                         const StopRule& stop) {
  switch (method) {
    case FitMethod::kMar: return fit_mar(net, q, init, stop);
    case FitMethod::kDoubleStandard:
      return fit_nmar(net, q, NmarFamily::kDoubleStandard, init, stop);
    case FitMethod::kClass: return fit_nmar(net, q, NmarFamily::kClass, init, stop);
    case FitMethod::kStarDegree: return fit_nmar(net, q, NmarFamily::kStarDegree, init, stop);
  }
  throw InputError("fit_one: unknown method");
}

inline double final_bound(const FitResult& fit) {
  return fit.bound_trace.empty() ? kNegInf : fit.bound_trace.back();
}

/// Best of `restarts` runs by final bound; restarts execute concurrently.
inline FitResult fit_command(const ObservedNetwork& net, int q, FitMethod method,
                             const FitOptions& opts) {
  Rng rng = make_rng(opts.seed, {static_cast<std::uint64_t>(q)});
  const auto inits = make_restart_inits(net, q, std::max(1, opts.restarts), rng);
  std::vector<FitResult> fits(inits.size());
  parallel_for(inits.size(),
               [&](std::size_t r) { fits[r] = fit_one(net, q, method, inits[r], opts.stop); });
  std::size_t best = 0;
  for (std::size_t r = 1; r < fits.size(); ++r)
    if (final_bound(fits[r]) > final_bound(fits[best])) best = r;
  return fits[best];
}

// ---------------------------------------------------------------------------
// Joint selection of the block count and the sampling design.
// ---------------------------------------------------------------------------

struct SelectionRow {
  int q;
  FitMethod method;
  double icl;
  double bound;
};

struct SelectionTable {
  std::vector<SelectionRow> rows;
  int best_q = 0;
  FitMethod best_method = FitMethod::kMar;
};

/// Evaluates ICL over the (q, method) grid with initializations shared across
/// methods for each q. When MAR competes against NMAR designs its ICL is the
/// random-dyad comparator, which lives on the completed-data scale. Ties break
/// toward smaller q, then toward MAR.
inline SelectionTable select_command(const ObservedNetwork& net, const std::vector<int>& q_grid,
                                     const std::vector<FitMethod>& methods,
                                     const FitOptions& opts) {
  if (q_grid.empty() || methods.empty())
    throw InputError("select_command: empty q grid or method list");
  const bool cross_design = methods.size() > 1;
  SelectionTable table;
  struct Cell { int q; FitMethod method; FitResult fit; };
  std::vector<Cell> cells;
  for (int q : q_grid)
    for (FitMethod m : methods) cells.push_back({q, m, {}});
  // One shared init set per q, reused by every method.
  std::vector<std::vector<Matrix>> inits_per_q;
  for (int q : q_grid) {
    Rng rng = make_rng(opts.seed, {static_cast<std::uint64_t>(q)});
    inits_per_q.push_back(make_restart_inits(net, q, std::max(1, opts.restarts), rng));
  }
  parallel_for(cells.size(), [&](std::size_t c) {
    auto& cell = cells[c];
    std::size_t qi = 0;
    while (q_grid[qi] != cell.q) ++qi;
    const auto& inits = inits_per_q[qi];
    FitResult best;
    double best_bound = kNegInf;
    for (const auto& init : inits) {
      FitResult fit = fit_one(net, cell.q, cell.method, init, opts.stop);
      if (final_bound(fit) > best_bound || best.tau.size() == 0) {
        best_bound = final_bound(fit);
        best = std::move(fit);
      }
    }
    cell.fit = std::move(best);
  });
  for (auto& cell : cells) {
    double icl = cell.fit.icl;
    if (cell.method == FitMethod::kMar && cross_design)
      icl = icl_mar_comparator(net, cell.fit, cell.q);
    table.rows.push_back({cell.q, cell.method, icl, final_bound(cell.fit)});
  }
  std::size_t best = 0;
  auto better = [&](const SelectionRow& a, const SelectionRow& b) {
    if (a.icl != b.icl) return a.icl < b.icl;
    if (a.q != b.q) return a.q < b.q;
    return a.method == FitMethod::kMar && b.method != FitMethod::kMar;
  };
  for (std::size_t r = 1; r < table.rows.size(); ++r)
    if (better(table.rows[r], table.rows[best])) best = r;
  table.best_q = table.rows[best].q;
  table.best_method = table.rows[best].method;
  return table;
}

// ---------------------------------------------------------------------------
// Simulation sweep: replicate x psi-grid x q-grid x method, streamed as CSV.
// ---------------------------------------------------------------------------

struct ExperimentConfig {
  Topology topology = Topology::kAffiliation;
  double epsilon = 0.05;
  int n = 100;
  std::vector<SamplingDesign> design_grid;  // one design per psi grid point
  std::vector<int> q_grid;
  std::vector<FitMethod> methods;
  int replications = 50;
  int restarts = 10;
  std::uint64_t seed = 0;

  /// Custom connectivity overriding the topology preset when set.
  std::optional<SbmParameters> custom_params;

  SbmParameters model() const {
    return custom_params ? *custom_params : topology_parameters(topology, epsilon);
  }
  int true_q() const { return model().block_count(); }
};

inline ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
  try {
    ExperimentConfig cfg;
    if (j.contains("params")) {
      cfg.custom_params = params_from_json(j.at("params"));
    } else {
      cfg.topology = topology_from_name(j.at("topology").get<std::string>());
      cfg.epsilon = j.at("epsilon").get<double>();
    }
    cfg.n = j.at("n").get<int>();
    for (const auto& d : j.at("designs")) cfg.design_grid.push_back(design_from_json(d));
    cfg.q_grid = j.value("q_grid", std::vector<int>{cfg.true_q()});
    const auto methods = j.value("methods", std::vector<std::string>{"mar"});
    for (const auto& m : methods) cfg.methods.push_back(method_from_name(m));
    cfg.replications = j.value("replications", 50);
    cfg.restarts = j.value("restarts", 10);
    cfg.seed = j.value("seed", 0);
    if (cfg.design_grid.empty() || cfg.q_grid.empty() || cfg.methods.empty())
      throw InputError("experiment config: empty grid");
    if (cfg.replications < 1) throw InputError("experiment config: replications must be >= 1");
    return cfg;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("experiment config: ") + e.what());
  }
}

namespace detail {

inline std::string format_double(double x) {
  if (std::isnan(x)) return "NA";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", x);
  return buf;
}

inline std::string psi_string(const SamplingDesign& design) {
  struct Fmt {
    std::string operator()(const RandomDyadSampling& d) const { return format_double(d.rho); }
    std::string operator()(const StarSampling& d) const { return format_double(d.rho); }
    std::string operator()(const SnowballSampling& d) const {
      return format_double(d.rho) + ";" + std::to_string(d.waves);
    }
    std::string operator()(const DoubleStandardSampling& d) const {
      return format_double(d.rho0) + ";" + format_double(d.rho1);
    }
    std::string operator()(const StarDegreeSampling& d) const {
      return format_double(d.intercept) + ";" + format_double(d.slope);
    }
    std::string operator()(const ClassSampling& d) const {
      std::string out;
      for (Eigen::Index k = 0; k < d.rho.size(); ++k) {
        if (k > 0) out += ";";
        out += format_double(d.rho[k]);
      }
      return out;
    }
  };
  return std::visit(Fmt{}, design);
}

/// Relative design-parameter error; comparable entries only (same family).
inline double psi_rel_error(const std::vector<double>& psi_hat, const SamplingDesign& truth) {
  std::vector<double> true_psi;
  if (const auto* ds = std::get_if<DoubleStandardSampling>(&truth))
    true_psi = {ds->rho0, ds->rho1};
  else if (const auto* sd = std::get_if<StarDegreeSampling>(&truth))
    true_psi = {sd->intercept, sd->slope};
  else if (const auto* cs = std::get_if<ClassSampling>(&truth))
    true_psi.assign(cs->rho.data(), cs->rho.data() + cs->rho.size());
  else
    return std::numeric_limits<double>::quiet_NaN();
  if (psi_hat.size() != true_psi.size()) return std::numeric_limits<double>::quiet_NaN();
  double err = 0.0;
  for (std::size_t k = 0; k < true_psi.size(); ++k) {
    const double denom = std::abs(true_psi[k]) > 1e-12 ? std::abs(true_psi[k]) : 1.0;
    err = std::max(err, std::abs(psi_hat[k] - true_psi[k]) / denom);
  }
  return err;
}

}  // namespace detail

inline const char* kExperimentCsvHeader =
    "replicate,psi,q,method,sampling_rate,ari,frob_err,rho_err,icl,icl_correct";

/// Runs the full replicate x design x q x method sweep. Each (replicate,
/// design) pair draws its own network and mask from a stream derived from
/// (seed, design index, replicate); rows are emitted in deterministic order.
/// icl_correct marks, on every row of a (replicate, design, method) group,
/// whether the ICL-argmin over the q grid hits the generating block count.
inline void run_experiment(const ExperimentConfig& cfg, std::ostream& out) {
  const SbmParameters truth = cfg.model();
  const int q_true = truth.block_count();

  struct Row {
    double sampling_rate, ari, frob, rho_err, icl;
    int icl_correct;
  };
  const std::size_t n_cells =
      static_cast<std::size_t>(cfg.replications) * cfg.design_grid.size();
  std::vector<std::vector<Row>> results(n_cells);  // one row per (q, method)

  parallel_for(n_cells, [&](std::size_t cell) {
    const std::size_t d = cell % cfg.design_grid.size();
    const int rep = static_cast<int>(cell / cfg.design_grid.size());
    const SamplingDesign& design = cfg.design_grid[d];
    Rng rng = make_rng(cfg.seed, {0xda7a, d, static_cast<std::uint64_t>(rep)});
    auto [full, z] = sample_sbm_network(truth, cfg.n, rng);
    const ObservedNetwork net = apply_design(full, z, design, rng);
    const double rate =
        static_cast<double>(net.observed_dyad_count()) / static_cast<double>(net.dyad_count());

    auto& rows = results[cell];
    rows.resize(cfg.q_grid.size() * cfg.methods.size());
    for (std::size_t mi = 0; mi < cfg.methods.size(); ++mi) {
      const FitMethod method = cfg.methods[mi];
      double best_icl = std::numeric_limits<double>::infinity();
      int best_q = -1;
      std::vector<Row*> group;
      for (std::size_t qi = 0; qi < cfg.q_grid.size(); ++qi) {
        const int q = cfg.q_grid[qi];
        FitOptions opts;
        opts.restarts = cfg.restarts;
        opts.seed = mix64(cfg.seed ^ mix64(cell * 1315423911u + qi));
        opts.stop = StopRule{};
        const FitResult fit = fit_command(net, q, method, opts);
        Row row;
        row.sampling_rate = rate;
        row.ari = adjusted_rand_index(fit.hard_assignment(), z);
        row.frob = q == q_true ? frobenius_rel_error(fit.theta.pi, truth.pi)
                               : std::numeric_limits<double>::quiet_NaN();
        row.rho_err = method == FitMethod::kMar
                          ? std::numeric_limits<double>::quiet_NaN()
                          : detail::psi_rel_error(fit.psi, design);
        row.icl = fit.icl;
        row.icl_correct = 0;
        rows[mi * cfg.q_grid.size() + qi] = row;
        group.push_back(&rows[mi * cfg.q_grid.size() + qi]);
        if (fit.icl < best_icl) {
          best_icl = fit.icl;
          best_q = q;
        }
      }
      const int correct = best_q == q_true ? 1 : 0;
      for (Row* g : group) g->icl_correct = correct;
    }
  });

  out << kExperimentCsvHeader << '\n';
  for (std::size_t cell = 0; cell < n_cells; ++cell) {
    const std::size_t d = cell % cfg.design_grid.size();
    const int rep = static_cast<int>(cell / cfg.design_grid.size());
    for (std::size_t mi = 0; mi < cfg.methods.size(); ++mi)
      for (std::size_t qi = 0; qi < cfg.q_grid.size(); ++qi) {
        const Row& row = results[cell][mi * cfg.q_grid.size() + qi];
        out << rep << ',' << detail::psi_string(cfg.design_grid[d]) << ',' << cfg.q_grid[qi]
            << ',' << method_name(cfg.methods[mi]) << ','
            << detail::format_double(row.sampling_rate) << ',' << detail::format_double(row.ari)
            << ',' << detail::format_double(row.frob) << ','
            << detail::format_double(row.rho_err) << ',' << detail::format_double(row.icl) << ','
            << row.icl_correct << '\n';
      }
  }
}

}  // namespace sbm
