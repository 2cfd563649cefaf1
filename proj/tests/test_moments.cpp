// Apache License, Version 2.0, refer to LICENSE.txt

#include <catch_amalgamated.hpp>

#include "oracles.hpp"
#include "sbm/metrics.hpp"
#include "sbm/moments.hpp"

using namespace sbm;
using Catch::Approx;

namespace {

SbmParameters make_params(std::initializer_list<double> alpha,
                          std::initializer_list<std::initializer_list<double>> pi) {
  SbmParameters p;
  p.alpha.resize(static_cast<Eigen::Index>(alpha.size()));
  int k = 0;
  for (double a : alpha) p.alpha[k++] = a;
  const int q = k;
  p.pi.resize(q, q);
  int r = 0;
  for (const auto& row : pi) {
    int c = 0;
    for (double x : row) p.pi(r, c++) = x;
    ++r;
  }
  return p;
}

/// Valid random instance with comfortably separated roots (rejection
/// sampling, as the recovery contract assumes).
SbmParameters random_separated(int q, Rng& rng, const Vector* rho = nullptr) {
  for (;;) {
    SbmParameters p;
    p.alpha = dirichlet_uniform(q, rng);
    if (p.alpha.minCoeff() < 0.1) continue;
    p.pi.resize(q, q);
    for (int a = 0; a < q; ++a)
      for (int b = a; b < q; ++b) p.pi(a, b) = p.pi(b, a) = 0.05 + 0.9 * uniform01(rng);
    auto gaps_ok = [](Vector v) {
      std::sort(v.data(), v.data() + v.size());
      for (Eigen::Index k = 1; k < v.size(); ++k)
        if (v[k] - v[k - 1] < 0.02) return false;
      return true;
    };
    if (!gaps_ok(p.pi * p.alpha)) continue;
    if (rho != nullptr && !gaps_ok(p.pi * rho->cwiseProduct(p.alpha))) continue;
    return p;
  }
}

}  // namespace

TEST_CASE("single-block moments are geometric", "[moments]") {
  SbmParameters p = make_params({1.0}, {{0.45}});
  const MomentSequence mom = exact_moments(p, RandomDyadSampling{0.8});
  REQUIRE(mom.u.size() == 2);
  REQUIRE(mom.u[0] == Approx(1.0));
  REQUIRE(mom.u[1] == Approx(0.8 * 0.45));
  const SbmParameters rec = recover_mar(mom, 0.8, 1);
  REQUIRE(rec.alpha[0] == Approx(1.0).margin(1e-10));
  REQUIRE(rec.pi(0, 0) == Approx(0.45).margin(1e-10));
}

TEST_CASE("moments agree with a Monte-Carlo probability estimate", "[moments][slow]") {
  const SbmParameters p = make_params({0.4, 0.6}, {{0.7, 0.1}, {0.1, 0.5}});
  const double rho = 0.8;
  const MomentSequence mom = exact_moments(p, RandomDyadSampling{rho});
  // u_i = P(Y_12 R_12 = 1, ..., Y_1,i+1 R_1,i+1 = 1) on networks of n = 5.
  Rng rng = make_rng(515);
  const int draws = 200000;
  Vector hits = Vector::Zero(3);
  for (int d = 0; d < draws; ++d) {
    int z[4];
    for (int& zi : z) zi = categorical(p.alpha, rng);
    bool run = true;
    for (int j = 1; j <= 3; ++j) {
      run = run && bernoulli(p.pi(z[0], z[j]), rng) && bernoulli(rho, rng);
      if (run) hits[j - 1] += 1.0;
    }
  }
  hits /= static_cast<double>(draws);
  for (int i = 1; i <= 3; ++i) {
    const double se = std::sqrt(mom.u[i] * (1.0 - mom.u[i]) / draws);
    REQUIRE(hits[i - 1] == Approx(mom.u[i]).margin(4.0 * se + 1e-4));
  }
}

TEST_CASE("moments are invariant under block permutation", "[moments]") {
  const SbmParameters p = make_params({0.4, 0.6}, {{0.7, 0.1}, {0.1, 0.5}});
  SbmParameters swapped = make_params({0.6, 0.4}, {{0.5, 0.1}, {0.1, 0.7}});
  const MomentSequence a = exact_moments(p, RandomDyadSampling{0.8});
  const MomentSequence b = exact_moments(swapped, RandomDyadSampling{0.8});
  REQUIRE((a.u - b.u).cwiseAbs().maxCoeff() < 1e-12);
  REQUIRE((*a.cross - *b.cross).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("round trip under random-dyad and star sampling", "[moments]") {
  // Note pi(1,1) = 0.4: with 0.5 the coordinates of pi*alpha coincide (0.34,
  // 0.34) and the recovery's distinct-roots assumption is violated by design.
  const SbmParameters p = make_params({0.4, 0.6}, {{0.7, 0.1}, {0.1, 0.4}});
  for (const SamplingDesign& design :
       {SamplingDesign{RandomDyadSampling{0.8}}, SamplingDesign{StarSampling{0.6}}}) {
    const MomentSequence mom = exact_moments(p, design);
    const SbmParameters rec = recover_mar(mom, mom.rho, 2);
    // Recovery is in sorted-root order; put the truth in the same order.
    REQUIRE(rec.alpha.sum() == Approx(1.0).margin(1e-8));
    REQUIRE(frobenius_rel_error(rec.pi, p.pi) < 1e-8);
    Vector sorted_alpha = p.alpha;
    std::sort(sorted_alpha.data(), sorted_alpha.data() + 2);
    Vector rec_alpha = rec.alpha;
    std::sort(rec_alpha.data(), rec_alpha.data() + 2);
    REQUIRE((rec_alpha - sorted_alpha).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("round trips over random separated instances", "[moments]") {
  Rng rng = make_rng(626);
  for (int q : {2, 3}) {
    for (int rep = 0; rep < 25; ++rep) {
      const SbmParameters p = random_separated(q, rng);
      const double rho = 0.3 + 0.6 * uniform01(rng);
      const MomentSequence mom = exact_moments(p, RandomDyadSampling{rho});
      const SbmParameters rec = recover_mar(mom, rho, q);
      REQUIRE(frobenius_rel_error(rec.pi, p.pi) < 1e-6);
      Vector ta = p.alpha, ra = rec.alpha;
      std::sort(ta.data(), ta.data() + q);
      std::sort(ra.data(), ra.data() + q);
      REQUIRE((ta - ra).cwiseAbs().maxCoeff() < 1e-6);
    }
  }
}

TEST_CASE("repeated roots raise the degeneracy error", "[moments]") {
  // pi alpha = ((a+b)/2, (a+b)/2): both coordinates coincide by construction.
  const SbmParameters p = make_params({0.5, 0.5}, {{0.6, 0.2}, {0.2, 0.6}});
  const Vector s = p.pi * p.alpha;
  REQUIRE(std::abs(s[0] - s[1]) < 1e-15);
  const MomentSequence mom = exact_moments(p, RandomDyadSampling{0.9});
  REQUIRE_THROWS_AS(recover_mar(mom, 0.9, 2), NumericalError);
}

TEST_CASE("class sampling round trip recovers alpha, pi and rho", "[moments]") {
  const SbmParameters p = make_params({0.3, 0.7}, {{0.6, 0.1}, {0.1, 0.4}});
  ClassSampling design;
  design.rho.resize(2);
  design.rho << 0.9, 0.2;
  const MomentSequence mom = exact_moments(p, design);
  const auto [rec, rho] = recover_class(mom, 2);
  REQUIRE(frobenius_rel_error(rec.pi, p.pi) < 1e-6);
  // The t-system orders blocks by t_q = (pi (rho alpha))_q.
  const Vector t = p.pi * design.rho.cwiseProduct(p.alpha);
  const int first = t[0] < t[1] ? 0 : 1;
  REQUIRE(rec.alpha[0] == Approx(p.alpha[first]).margin(1e-6));
  REQUIRE(rec.alpha[1] == Approx(p.alpha[1 - first]).margin(1e-6));
  REQUIRE(rho[0] == Approx(design.rho[first]).margin(1e-6));
  REQUIRE(rho[1] == Approx(design.rho[1 - first]).margin(1e-6));
}

TEST_CASE("class round trips over random separated instances", "[moments]") {
  Rng rng = make_rng(727);
  for (int q : {2, 3}) {
    for (int rep = 0; rep < 25; ++rep) {
      Vector rho(q);
      for (int k = 0; k < q; ++k) rho[k] = 0.15 + 0.8 * uniform01(rng);
      const SbmParameters p = random_separated(q, rng, &rho);
      ClassSampling design;
      design.rho = rho;
      const MomentSequence mom = exact_moments(p, design);
      const auto [rec, rho_hat] = recover_class(mom, q);
      REQUIRE(frobenius_rel_error(rec.pi, p.pi) < 1e-6);
      Vector prod_true = rho.cwiseProduct(p.alpha), prod_rec = rho_hat.cwiseProduct(rec.alpha);
      std::sort(prod_true.data(), prod_true.data() + q);
      std::sort(prod_rec.data(), prod_rec.data() + q);
      REQUIRE((prod_true - prod_rec).cwiseAbs().maxCoeff() < 1e-6);
      Vector rs = rho, rhs = rho_hat;
      std::sort(rs.data(), rs.data() + q);
      std::sort(rhs.data(), rhs.data() + q);
      REQUIRE((rs - rhs).cwiseAbs().maxCoeff() < 1e-6);
    }
  }
}

TEST_CASE("unit selection probabilities reduce class recovery to the MAR case", "[moments]") {
  const SbmParameters p = make_params({0.35, 0.65}, {{0.65, 0.15}, {0.15, 0.45}});
  ClassSampling design;
  design.rho = Vector::Ones(2);
  const MomentSequence mom = exact_moments(p, design);
  const auto [rec, rho] = recover_class(mom, 2);
  REQUIRE(rho[0] == Approx(1.0).margin(1e-8));
  REQUIRE(rho[1] == Approx(1.0).margin(1e-8));
  REQUIRE(frobenius_rel_error(rec.pi, p.pi) < 1e-8);
}

TEST_CASE("alpha and rho are separately identifiable, not just their product", "[moments]") {
  // Same alpha.rho products, different factors: the moment sequences differ.
  const SbmParameters p1 = make_params({0.3, 0.7}, {{0.6, 0.1}, {0.1, 0.4}});
  ClassSampling d1;
  d1.rho.resize(2);
  d1.rho << 0.8, 0.3;
  const SbmParameters p2 = make_params({0.4, 0.6}, {{0.6, 0.1}, {0.1, 0.4}});
  ClassSampling d2;
  d2.rho.resize(2);
  d2.rho << 0.6, 0.35;
  REQUIRE(p1.alpha[0] * d1.rho[0] == Approx(p2.alpha[0] * d2.rho[0]));
  REQUIRE(p1.alpha[1] * d1.rho[1] == Approx(p2.alpha[1] * d2.rho[1]));
  const MomentSequence m1 = exact_moments(p1, d1);
  const MomentSequence m2 = exact_moments(p2, d2);
  const double diff = std::max((m1.u - m2.u).cwiseAbs().maxCoeff(),
                               (*m1.v - *m2.v).cwiseAbs().maxCoeff());
  REQUIRE(diff > 1e-4);
}

TEST_CASE("the Hankel polynomial vanishes at the true roots", "[moments]") {
  Rng rng = make_rng(828);
  const SbmParameters p = random_separated(3, rng);
  const double rho = 0.7;
  const MomentSequence mom = exact_moments(p, RandomDyadSampling{rho});
  // Rebuild B(x) with test-local determinants and evaluate at the true roots.
  const int q = 3;
  Matrix hankel(q + 1, q);
  for (int i = 0; i <= q; ++i)
    for (int j = 0; j < q; ++j) hankel(i, j) = mom.u[i + j];
  Vector coeff(q + 1);
  for (int k = 0; k <= q; ++k) {
    Matrix minor(q, q);
    int r = 0;
    for (int i = 0; i <= q; ++i) {
      if (i == k) continue;
      minor.row(r++) = hankel.row(i);
    }
    coeff[k] = (((k + q) % 2 == 0) ? 1.0 : -1.0) * minor.determinant();
  }
  const Vector s = rho * (p.pi * p.alpha);
  for (int k = 0; k < q; ++k) {
    double value = 0.0, power = 1.0;
    for (int d = 0; d <= q; ++d) {
      value += coeff[d] * power;
      power *= s[k];
    }
    REQUIRE(std::abs(value) < 1e-9 * std::abs(coeff[q]));
  }
}

TEST_CASE("vandermonde systems validate their roots", "[moments]") {
  Vector good(3);
  good << 0.1, 0.4, 0.9;
  const VandermondeSystem sys(good);
  REQUIRE(sys.vmatrix(2, 2) == Approx(0.81));
  Vector bad(2);
  bad << 0.5, 0.5;
  REQUIRE_THROWS_AS(VandermondeSystem(bad), NumericalError);
}
