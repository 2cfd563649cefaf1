// Apache License, Version 2.0, refer to LICENSE.txt
#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "sbm/common.hpp"

namespace sbm {

/// Block proportions alpha and symmetric connectivity matrix pi.
struct SbmParameters {
  Vector alpha;  // length Q, sums to 1
  Matrix pi;     // Q x Q, symmetric, entries in [0,1]

  int block_count() const { return static_cast<int>(alpha.size()); }

  void validate() const {
    const int q = block_count();
    if (q < 1) throw InputError("SbmParameters: at least one block required");
    if (pi.rows() != q || pi.cols() != q)
      throw InputError("SbmParameters: pi must be Q x Q");
    if (alpha.minCoeff() < 0.0 || std::abs(alpha.sum() - 1.0) > 1e-8)
      throw InputError("SbmParameters: alpha is not a probability vector");
    for (int a = 0; a < q; ++a)
      for (int b = 0; b < q; ++b) {
        if (pi(a, b) < 0.0 || pi(a, b) > 1.0)
          throw InputError("SbmParameters: pi entries must lie in [0,1]");
        if (std::abs(pi(a, b) - pi(b, a)) > 1e-12)
          throw InputError("SbmParameters: pi must be symmetric");
      }
  }
};

/// Node-to-block assignment with 0-based labels in {0,...,Q-1}.
struct BlockAssignment {
  std::vector<int> labels;
  int q = 0;

  BlockAssignment() = default;
  BlockAssignment(std::vector<int> l, int q_) : labels(std::move(l)), q(q_) {}

  int n() const { return static_cast<int>(labels.size()); }

  Matrix one_hot() const {
    Matrix z = Matrix::Zero(n(), q);
    for (int i = 0; i < n(); ++i) z(i, labels[i]) = 1.0;
    return z;
  }
};

enum class DyadState : std::uint8_t { kAbsent = 0, kPresent = 1, kMissing = 2 };

/// Partially observed undirected binary network. Each unordered dyad (i,j),
/// i<j, carries one of {Absent, Present, Missing}; stored as a dense upper
/// triangle (one byte per dyad, n is expected to stay a few thousands).
class ObservedNetwork {
 public:
  explicit ObservedNetwork(int n, DyadState fill = DyadState::kMissing)
      : n_(n), states_(dyads_in(n), static_cast<std::uint8_t>(fill)) {
    if (n < 1) throw InputError("ObservedNetwork: need at least one node");
  }

  int node_count() const { return n_; }
  std::size_t dyad_count() const { return states_.size(); }

  DyadState state(int i, int j) const {
    return static_cast<DyadState>(states_[index(i, j)]);
  }
  void set_state(int i, int j, DyadState s) {
    states_[index(i, j)] = static_cast<std::uint8_t>(s);
  }

  std::size_t count(DyadState s) const {
    return static_cast<std::size_t>(
        std::count(states_.begin(), states_.end(), static_cast<std::uint8_t>(s)));
  }
  std::size_t observed_dyad_count() const { return dyad_count() - count(DyadState::kMissing); }
  std::size_t missing_dyad_count() const { return count(DyadState::kMissing); }
  std::size_t observed_edge_count() const { return count(DyadState::kPresent); }
  bool has_missing() const { return missing_dyad_count() > 0; }

  /// Visits every dyad i<j in lexicographic order.
  template <typename F>
  void for_each_dyad(F&& f) const {
    for (int i = 0; i < n_; ++i)
      for (int j = i + 1; j < n_; ++j) f(i, j, state(i, j));
  }

  std::vector<std::pair<int, int>> missing_dyads() const {
    std::vector<std::pair<int, int>> out;
    for_each_dyad([&](int i, int j, DyadState s) {
      if (s == DyadState::kMissing) out.emplace_back(i, j);
    });
    return out;
  }

  /// Nodes incident to at least one observed dyad.
  std::vector<int> touched_nodes() const {
    std::vector<char> seen(n_, 0);
    for_each_dyad([&](int i, int j, DyadState s) {
      if (s != DyadState::kMissing) { seen[i] = 1; seen[j] = 1; }
    });
    return collect(seen);
  }

  /// Nodes whose every incident dyad is observed. Under node-centered
  /// sampling this recovers the set of directly selected nodes.
  std::vector<int> fully_observed_nodes() const {
    std::vector<char> full(n_, 1);
    for_each_dyad([&](int i, int j, DyadState s) {
      if (s == DyadState::kMissing) { full[i] = 0; full[j] = 0; }
    });
    return collect(full);
  }

  std::vector<char> fully_observed_mask() const {
    std::vector<char> full(n_, 1);
    for_each_dyad([&](int i, int j, DyadState s) {
      if (s == DyadState::kMissing) { full[i] = 0; full[j] = 0; }
    });
    return full;
  }

  /// Adjacency restricted to observed dyads (missing entries are 0).
  Matrix observed_adjacency() const {
    Matrix a = Matrix::Zero(n_, n_);
    for_each_dyad([&](int i, int j, DyadState s) {
      if (s == DyadState::kPresent) { a(i, j) = 1.0; a(j, i) = 1.0; }
    });
    return a;
  }

  Matrix observed_mask() const {
    Matrix m = Matrix::Zero(n_, n_);
    for_each_dyad([&](int i, int j, DyadState s) {
      if (s != DyadState::kMissing) { m(i, j) = 1.0; m(j, i) = 1.0; }
    });
    return m;
  }

  Matrix missing_mask() const {
    Matrix m = Matrix::Zero(n_, n_);
    for_each_dyad([&](int i, int j, DyadState s) {
      if (s == DyadState::kMissing) { m(i, j) = 1.0; m(j, i) = 1.0; }
    });
    return m;
  }

  friend bool operator==(const ObservedNetwork& a, const ObservedNetwork& b) {
    return a.n_ == b.n_ && a.states_ == b.states_;
  }

 private:
  static std::size_t dyads_in(int n) {
    return static_cast<std::size_t>(n) * (n - 1) / 2;
  }

  std::size_t index(int i, int j) const {
    if (i == j || i < 0 || j < 0 || i >= n_ || j >= n_)
      throw InputError("ObservedNetwork: dyad index out of range");
    if (i > j) std::swap(i, j);
    const std::size_t row = static_cast<std::size_t>(i);
    return row * (2 * static_cast<std::size_t>(n_) - row - 1) / 2 +
           static_cast<std::size_t>(j - i - 1);
  }

  std::vector<int> collect(const std::vector<char>& mask) const {
    std::vector<int> out;
    for (int i = 0; i < n_; ++i)
      if (mask[i]) out.push_back(i);
    return out;
  }

  int n_;
  std::vector<std::uint8_t> states_;
};

/// Draws latent blocks i.i.d. from alpha and each dyad i<j independently
/// Bernoulli(pi[z_i, z_j]). The returned network is loop-free, symmetric by
/// construction and has no missing dyad.
inline std::pair<ObservedNetwork, BlockAssignment> sample_sbm_network(
    const SbmParameters& params, int n, Rng& rng) {
  params.validate();
  if (n < 1) throw InputError("sample_sbm_network: n must be >= 1");
  BlockAssignment z;
  z.q = params.block_count();
  z.labels.resize(n);
  for (int i = 0; i < n; ++i) z.labels[i] = categorical(params.alpha, rng);
  ObservedNetwork net(n, DyadState::kAbsent);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (bernoulli(params.pi(z.labels[i], z.labels[j]), rng))
        net.set_state(i, j, DyadState::kPresent);
  return {std::move(net), std::move(z)};
}

/// Output of one variational fit. psi/nu/zeta are populated only by the
/// estimators that use them.
struct FitResult {
  SbmParameters theta;
  std::vector<double> psi;          // design parameters, empty for MAR fits
  Matrix tau;                       // n x Q responsibilities
  Matrix nu;                        // n x n, meaningful on missing dyads only
  Vector zeta;                      // per-node bound parameters (star degree)
  std::vector<double> bound_trace;  // lower bound after every sub-step
  double icl = std::numeric_limits<double>::quiet_NaN();
  std::vector<std::string> flags;   // degeneracy markers

  bool degenerate() const { return !flags.empty(); }

  /// MAP labels; ties broken toward the lowest block index.
  std::vector<int> hard_labels() const {
    std::vector<int> z(tau.rows());
    for (Eigen::Index i = 0; i < tau.rows(); ++i) {
      int best = 0;
      for (Eigen::Index q = 1; q < tau.cols(); ++q)
        if (tau(i, q) > tau(i, best)) best = static_cast<int>(q);
      z[i] = best;
    }
    return z;
  }

  BlockAssignment hard_assignment() const {
    return BlockAssignment(hard_labels(), static_cast<int>(tau.cols()));
  }
};

}  // namespace sbm
