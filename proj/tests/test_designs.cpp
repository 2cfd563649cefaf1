// Apache License, Version 2.0, refer to LICENSE.txt

#include <catch_amalgamated.hpp>

#include "oracles.hpp"
#include "sbm/designs.hpp"
#include "sbm/model.hpp"

using namespace sbm;
using Catch::Approx;

namespace {

SbmParameters affiliation(int q, double within, double between) {
  SbmParameters p;
  p.alpha = Vector::Constant(q, 1.0 / q);
  p.pi = Matrix::Constant(q, q, between);
  p.pi.diagonal().setConstant(within);
  return p;
}

std::pair<ObservedNetwork, BlockAssignment> draw(const SbmParameters& p, int n, std::uint64_t s) {
  Rng rng = make_rng(s);
  return sample_sbm_network(p, n, rng);
}

}  // namespace

TEST_CASE("double standard with full observation keeps everything", "[designs]") {
  const auto [full, z] = draw(affiliation(2, 0.7, 0.1), 30, 1);
  Rng rng = make_rng(2);
  const ObservedNetwork net =
      apply_design(full, z, DoubleStandardSampling{1.0, 1.0}, rng);
  REQUIRE(net.missing_dyad_count() == 0);
  REQUIRE(net == full);
}

TEST_CASE("star degree prefers high-degree nodes and hits the documented band", "[designs]") {
  SbmParameters p;
  p.alpha.resize(3);
  p.alpha << 0.25, 0.5, 0.25;
  p.pi = Matrix::Constant(3, 3, 0.05);
  p.pi.diagonal().setConstant(0.5);
  double rate_sum = 0.0;
  double degree_selected = 0.0, degree_unselected = 0.0;
  int n_selected = 0, n_unselected = 0;
  for (int rep = 0; rep < 20; ++rep) {
    Rng rng = make_rng(100 + rep);
    auto [full, z] = sample_sbm_network(p, 100, rng);
    const ObservedNetwork net = apply_design(full, z, StarDegreeSampling{-3.6, 0.1}, rng);
    rate_sum += static_cast<double>(net.observed_dyad_count()) / net.dyad_count();
    const auto sel = net.fully_observed_mask();
    std::vector<int> deg(100, 0);
    full.for_each_dyad([&](int i, int j, DyadState s) {
      if (s == DyadState::kPresent) { ++deg[i]; ++deg[j]; }
    });
    for (int i = 0; i < 100; ++i) {
      if (sel[i]) { degree_selected += deg[i]; ++n_selected; }
      else { degree_unselected += deg[i]; ++n_unselected; }
    }
  }
  const double mean_rate = rate_sum / 20.0;
  REQUIRE(mean_rate > 0.10);
  REQUIRE(mean_rate < 0.70);
  REQUIRE(n_selected > 0);
  REQUIRE(n_unselected > 0);
  REQUIRE(degree_selected / n_selected > degree_unselected / n_unselected);
}

TEST_CASE("class sampling matches per-block selection frequencies", "[designs]") {
  const SbmParameters p = affiliation(3, 0.6, 0.1);
  ClassSampling design;
  design.rho.resize(3);
  design.rho << 0.75, 0.5, 0.05;
  Vector picked = Vector::Zero(3), total = Vector::Zero(3);
  for (int rep = 0; rep < 10; ++rep) {
    Rng rng = make_rng(300 + rep);
    auto [full, z] = sample_sbm_network(p, 300, rng);
    const ObservedNetwork net = apply_design(full, z, design, rng);
    const auto sel = net.fully_observed_mask();
    for (int i = 0; i < 300; ++i) {
      total[z.labels[i]] += 1.0;
      if (sel[i]) picked[z.labels[i]] += 1.0;
    }
  }
  for (int q = 0; q < 3; ++q)
    REQUIRE(picked[q] / total[q] == Approx(design.rho[q]).margin(0.1));
}

TEST_CASE("MCAR missing rate does not depend on the network density", "[designs]") {
  const auto [dense, zd] = draw(affiliation(2, 0.9, 0.7), 60, 7);
  const auto [sparse, zs] = draw(affiliation(2, 0.1, 0.02), 60, 8);
  for (const SamplingDesign& design : {SamplingDesign{RandomDyadSampling{0.6}},
                                      SamplingDesign{StarSampling{0.5}}}) {
    double rate_dense = 0.0, rate_sparse = 0.0;
    const int reps = 200;
    for (int rep = 0; rep < reps; ++rep) {
      Rng r1 = make_rng(1000 + rep), r2 = make_rng(5000 + rep);
      rate_dense += apply_design(dense, zd, design, r1).missing_dyad_count() /
                    static_cast<double>(dense.dyad_count());
      rate_sparse += apply_design(sparse, zs, design, r2).missing_dyad_count() /
                     static_cast<double>(sparse.dyad_count());
    }
    rate_dense /= reps;
    rate_sparse /= reps;
    // Means of `reps` binomial fractions: 3-sigma Monte Carlo band.
    REQUIRE(rate_dense == Approx(rate_sparse).margin(0.02));
  }
}

TEST_CASE("double standard with rho0=rho1 is distributed as random-dyad", "[designs]") {
  const auto [full, z] = draw(affiliation(2, 0.7, 0.2), 40, 9);
  const double rho = 0.65;
  const int reps = 500;
  std::vector<double> counts_ds, counts_rd;
  for (int rep = 0; rep < reps; ++rep) {
    Rng r1 = make_rng(11000 + rep), r2 = make_rng(17000 + rep);
    counts_ds.push_back(static_cast<double>(
        apply_design(full, z, DoubleStandardSampling{rho, rho}, r1).missing_dyad_count()));
    counts_rd.push_back(static_cast<double>(
        apply_design(full, z, RandomDyadSampling{rho}, r2).missing_dyad_count()));
  }
  // Two-sample chi-square over quintile bins of the pooled sample.
  std::vector<double> pooled = counts_ds;
  pooled.insert(pooled.end(), counts_rd.begin(), counts_rd.end());
  std::sort(pooled.begin(), pooled.end());
  const int bins = 5;
  std::vector<double> edges;
  for (int b = 1; b < bins; ++b) edges.push_back(pooled[pooled.size() * b / bins]);
  auto histogram = [&](const std::vector<double>& v) {
    std::vector<double> h(bins, 0.0);
    for (double x : v) {
      int b = 0;
      while (b < bins - 1 && x > edges[b]) ++b;
      h[b] += 1.0;
    }
    return h;
  };
  const auto h1 = histogram(counts_ds), h2 = histogram(counts_rd);
  double chi2 = 0.0;
  for (int b = 0; b < bins; ++b) {
    const double expected = 0.5 * (h1[b] + h2[b]);
    if (expected > 0) chi2 += (h1[b] - expected) * (h1[b] - expected) / expected +
                              (h2[b] - expected) * (h2[b] - expected) / expected;
  }
  REQUIRE(chi2 < 18.5);  // chi-square(4) at the 0.1% level
}

TEST_CASE("node-centered designs blank exactly the unselected-pair dyads", "[designs]") {
  const auto [full, z] = draw(affiliation(2, 0.5, 0.2), 25, 12);
  Rng rng = make_rng(13);
  const ObservedNetwork net = apply_design(full, z, StarSampling{0.4}, rng);
  const auto sel = net.fully_observed_mask();
  net.for_each_dyad([&](int i, int j, DyadState s) {
    if (s == DyadState::kMissing)
      REQUIRE((!sel[i] && !sel[j]));
    else
      REQUIRE((sel[i] || sel[j]));
  });
}

TEST_CASE("snowball waves grow through observed edges", "[designs]") {
  // Path graph 0-1-2-3-4: seeding only node 0 must reach node 1 in wave 2.
  ObservedNetwork path(5, DyadState::kAbsent);
  for (int i = 0; i + 1 < 5; ++i) path.set_state(i, i + 1, DyadState::kPresent);
  BlockAssignment z(std::vector<int>(5, 0), 1);
  // rho high enough that at least one node is selected; fixed seed keeps it stable.
  Rng rng = make_rng(21);
  const ObservedNetwork one_wave = apply_design(path, z, SnowballSampling{0.3, 1}, rng);
  Rng rng2 = make_rng(21);
  const ObservedNetwork two_waves = apply_design(path, z, SnowballSampling{0.3, 2}, rng2);
  REQUIRE(two_waves.missing_dyad_count() <= one_wave.missing_dyad_count());
  Rng rng3 = make_rng(21);
  REQUIRE_THROWS_AS(apply_design(path, z, SnowballSampling{0.3, 0}, rng3), InputError);
}

TEST_CASE("design log-likelihood closed forms", "[designs]") {
  // rho0=rho1=0.5 on a complete 5-node network: every dyad contributes log 1/2.
  ObservedNetwork full(5, DyadState::kAbsent);
  full.set_state(0, 1, DyadState::kPresent);
  BlockAssignment z(std::vector<int>(5, 0), 1);
  const double ll =
      design_log_likelihood(DoubleStandardSampling{0.5, 0.5}, full, full, z);
  REQUIRE(ll == Approx(10.0 * std::log(0.5)));

  // Class sampling with rho=1 on fully observed data: log-likelihood 0.
  ClassSampling cs;
  cs.rho = Vector::Ones(2);
  BlockAssignment z2(std::vector<int>{0, 1, 0, 1, 0}, 2);
  REQUIRE(design_log_likelihood(cs, full, full, z2) == Approx(0.0));

  // Star degree on a 4-node path with a=b=0: every node has rho_i = 1/2.
  ObservedNetwork path(4, DyadState::kAbsent);
  for (int i = 0; i + 1 < 4; ++i) path.set_state(i, i + 1, DyadState::kPresent);
  ObservedNetwork sampled = path;
  sampled.set_state(0, 3, DyadState::kMissing);  // nodes 0 and 3 unselected
  BlockAssignment z3(std::vector<int>(4, 0), 1);
  REQUIRE(design_log_likelihood(StarDegreeSampling{0.0, 0.0}, sampled, path, z3) ==
          Approx(4.0 * std::log(0.5)));

  // Zero-probability configuration: observed dyads under rho = 0.
  REQUIRE(design_log_likelihood(RandomDyadSampling{0.0}, full, full, z) == kNegInf);
  REQUIRE_THROWS_AS(design_log_likelihood(SnowballSampling{0.5, 2}, full, full, z), InputError);
}

TEST_CASE("dyad-centered likelihoods normalize over all masks", "[designs]") {
  const auto [full, z] = draw(affiliation(2, 0.8, 0.3), 4, 31);
  for (const SamplingDesign& design : {SamplingDesign{RandomDyadSampling{0.37}},
                                      SamplingDesign{DoubleStandardSampling{0.25, 0.7}}}) {
    const std::size_t dyads = full.dyad_count();
    double total = 0.0;
    for (std::size_t mask = 0; mask < (std::size_t{1} << dyads); ++mask) {
      ObservedNetwork net = full;
      std::size_t k = 0;
      full.for_each_dyad([&](int i, int j, DyadState) {
        if ((mask >> k) & 1u) net.set_state(i, j, DyadState::kMissing);
        ++k;
      });
      total += std::exp(design_log_likelihood(design, net, full, z));
    }
    REQUIRE(total == Approx(1.0).margin(1e-9));
  }
}

TEST_CASE("node-centered likelihoods sum to one over selection sets", "[designs]") {
  // Selection sets with >= n-1 nodes all produce the complete mask, so the
  // library sees them as "everything selected"; their probability mass is
  // added analytically from the per-node selection probabilities.
  const auto [full, z] = draw(affiliation(2, 0.8, 0.3), 4, 33);
  ClassSampling cs;
  cs.rho.resize(2);
  cs.rho << 0.3, 0.8;
  const int n = full.node_count();
  std::vector<int> deg(n, 0);
  full.for_each_dyad([&](int i, int j, DyadState s) {
    if (s == DyadState::kPresent) { ++deg[i]; ++deg[j]; }
  });
  for (const SamplingDesign& design :
       {SamplingDesign{StarSampling{0.45}}, SamplingDesign{StarDegreeSampling{-0.5, 0.3}},
        SamplingDesign{cs}}) {
    auto select_prob = [&](int i) {
      if (const auto* st = std::get_if<StarSampling>(&design)) return st->rho;
      if (const auto* sd = std::get_if<StarDegreeSampling>(&design))
        return logistic(sd->intercept + sd->slope * deg[i]);
      return std::get<ClassSampling>(design).rho[z.labels[i]];
    };
    double total = 0.0;
    for (std::size_t mask = 0; mask < (std::size_t{1} << n); ++mask) {
      std::vector<char> sel(n, 0);
      int n_sel = 0;
      for (int i = 0; i < n; ++i) {
        sel[i] = (mask >> i) & 1u;
        n_sel += sel[i];
      }
      if (n_sel >= n - 1) {
        double p = 1.0;
        for (int i = 0; i < n; ++i) p *= sel[i] ? select_prob(i) : 1.0 - select_prob(i);
        total += p;
        continue;
      }
      ObservedNetwork net = full;
      net.for_each_dyad([&](int i, int j, DyadState) {
        if (!sel[i] && !sel[j]) net.set_state(i, j, DyadState::kMissing);
      });
      REQUIRE(net.fully_observed_mask() == sel);
      total += std::exp(design_log_likelihood(design, net, full, z));
    }
    REQUIRE(total == Approx(1.0).margin(1e-9));
  }
}

TEST_CASE("design metadata", "[designs]") {
  ClassSampling cs;
  cs.rho = Vector::Constant(4, 0.5);
  REQUIRE(centering(RandomDyadSampling{0.5}) == Centering::kDyad);
  REQUIRE(centering(StarSampling{0.5}) == Centering::kNode);
  REQUIRE(missingness(RandomDyadSampling{0.5}) == Missingness::kMcar);
  REQUIRE(missingness(StarSampling{0.5}) == Missingness::kMcar);
  REQUIRE(missingness(SnowballSampling{0.5, 2}) == Missingness::kMar);
  REQUIRE(missingness(DoubleStandardSampling{0.2, 0.8}) == Missingness::kNmar);
  REQUIRE(missingness(StarDegreeSampling{0, 1}) == Missingness::kNmar);
  REQUIRE(missingness(cs) == Missingness::kNmar);
  REQUIRE(param_count(SnowballSampling{0.5, 2}) == 1);
  REQUIRE(param_count(DoubleStandardSampling{0.2, 0.8}) == 2);
  REQUIRE(param_count(cs) == 4);
}
