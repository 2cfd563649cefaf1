// Apache License, Version 2.0, refer to LICENSE.txt
#pragma once

#include <Eigen/Dense>

#include <atomic>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <mutex>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace sbm {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Raised on malformed user input (bad files, invalid parameters). CLI exit code 2.
struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Raised on numerical degeneracy (singular systems, repeated roots). CLI exit code 3.
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline constexpr double kProbEps = 1e-9;
inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

inline double clamp_prob(double p) {
  return std::min(std::max(p, kProbEps), 1.0 - kProbEps);
}

inline double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// log(logistic(x)), stable for large |x|.
inline double log_logistic(double x) {
  if (x >= 0.0) return -std::log1p(std::exp(-x));
  return x - std::log1p(std::exp(x));
}

inline double logit(double p) {
  p = clamp_prob(p);
  return std::log(p) - std::log1p(-p);
}

/// x*log(x) with the continuous extension at 0.
inline double xlogx(double x) { return x > 0.0 ? x * std::log(x) : 0.0; }

inline double bernoulli_entropy(double p) { return -xlogx(p) - xlogx(1.0 - p); }

/// log of the Bernoulli density b(x;p) = p^x (1-p)^(1-x) for x in [0,1].
/// p is clamped before the log unless it is exactly 0 or 1 and contradicts x,
/// in which case -inf is returned.
inline double log_bernoulli(double x, double p) {
  if (p <= 0.0 && x > 0.0) return kNegInf;
  if (p >= 1.0 && x < 1.0) return kNegInf;
  const double pc = clamp_prob(p);
  double v = 0.0;
  if (x > 0.0) v += x * std::log(pc);
  if (x < 1.0) v += (1.0 - x) * std::log1p(-pc);
  return v;
}

/// Curvature coefficient of the quadratic bound on log logistic:
/// h(z) = -(logistic(z) - 1/2) / (2z), with the series limit -1/8 near 0.
inline double jaakkola_h(double zeta) {
  const double z = std::abs(zeta);
  if (z < 1e-4) return -0.125 + z * z / 96.0;
  return -(logistic(z) - 0.5) / (2.0 * z);
}

/// In-place softmax of a logit vector; returns log-sum-exp.
inline double softmax_inplace(Eigen::Ref<Vector> logits) {
  const double m = logits.maxCoeff();
  double z = 0.0;
  for (Eigen::Index q = 0; q < logits.size(); ++q) z += std::exp(logits[q] - m);
  const double lse = m + std::log(z);
  for (Eigen::Index q = 0; q < logits.size(); ++q) logits[q] = std::exp(logits[q] - lse);
  return lse;
}

// ---------------------------------------------------------------------------
// Random number streams. Every stochastic operation takes an explicit Rng;
// independent streams are derived by mixing a base seed with stream indices.
// ---------------------------------------------------------------------------

using Rng = std::mt19937_64;

inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline Rng make_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> stream = {}) {
  std::uint64_t s = mix64(seed);
  for (std::uint64_t v : stream) s = mix64(s ^ mix64(v));
  return Rng(s);
}

inline double uniform01(Rng& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

inline bool bernoulli(double p, Rng& rng) { return uniform01(rng) < p; }

inline int categorical(const Vector& probs, Rng& rng) {
  double u = uniform01(rng);
  double acc = 0.0;
  for (Eigen::Index q = 0; q < probs.size(); ++q) {
    acc += probs[q];
    if (u < acc) return static_cast<int>(q);
  }
  return static_cast<int>(probs.size()) - 1;
}

/// One row of a flat Dirichlet(1,...,1): normalized exponentials.
inline Vector dirichlet_uniform(int q, Rng& rng) {
  Vector row(q);
  std::exponential_distribution<double> expo(1.0);
  for (int k = 0; k < q; ++k) row[k] = expo(rng);
  return row / row.sum();
}

// ---------------------------------------------------------------------------
// Tiny work-sharing loop for independent tasks (replicates, restarts).
// Nested calls run serially so fits inside an experiment sweep do not
// oversubscribe the machine.
// ---------------------------------------------------------------------------

namespace detail {
inline bool& in_parallel_region() {
  thread_local bool flag = false;
  return flag;
}
}  // namespace detail

template <typename Body>
void parallel_for(std::size_t count, Body&& body, unsigned max_threads = 0) {
  if (count == 0) return;
  unsigned hw = std::thread::hardware_concurrency();
  if (hw == 0) hw = 1;
  unsigned workers = max_threads == 0 ? hw : std::min(max_threads, hw);
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, count));
  if (workers <= 1 || detail::in_parallel_region()) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto work = [&] {
    detail::in_parallel_region() = true;
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= count) break;
      try {
        body(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
    detail::in_parallel_region() = false;
  };
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  for (unsigned t = 1; t < workers; ++t) pool.emplace_back(work);
  work();
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace sbm
