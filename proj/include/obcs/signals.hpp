#pragma once

// Reproducible signal generation and reconstruction metrics.
//
// Randomness contract: the engine is std::mt19937_64 (bit-exact across
// standard libraries) and every distribution on top of it is coded here
// rather than taken from <random>, whose distributions are
// implementation-defined. Same seed, same call sequence => bit-identical
// draws on any platform.

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

#include "obcs/linalg.hpp"

namespace obcs {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0,1), 53-bit resolution.
  double uniform01() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller; the second variate of each pair is
  // cached, so draw order fully determines the stream.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    // u1 in (0,1] so the log is finite.
    const double u1 =
        (static_cast<double>(engine_() >> 11) + 1.0) * 0x1.0p-53;
    const double u2 = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  // Uniform integer in [0, bound) by rejection, no modulo bias.
  std::uint64_t bounded(std::uint64_t bound) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t v;
    do {
      v = engine_();
    } while (v >= limit);
    return v % bound;
  }

  // Decorrelated child seed for worker/stream `stream` (splitmix64 mix).
  static std::uint64_t derive(std::uint64_t base, std::uint64_t stream) {
    std::uint64_t z = base + 0x9E3779B97F4A7C15ull * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

struct SparseSignal {
  Vector x;                          // length n, unit l2 norm
  std::vector<std::size_t> support;  // K distinct indices, ascending
};

// K nonzeros on a uniformly random support, standard-normal amplitudes,
// the whole vector scaled to the unit sphere.
inline SparseSignal gen_sparse_signal(std::size_t n, std::size_t k, Rng& rng) {
  if (k == 0 || k > n)
    throw ContractViolation("gen_sparse_signal: need 1 <= K <= n, got K=" +
                            std::to_string(k) + " n=" + std::to_string(n));
  // Partial Fisher-Yates for the support.
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + rng.bounded(n - i);
    std::swap(idx[i], idx[j]);
  }
  std::vector<std::size_t> support(idx.begin(), idx.begin() + k);
  std::sort(support.begin(), support.end());

  SparseSignal s;
  s.support = std::move(support);
  s.x.assign(n, 0.0);
  double nrm;
  do {
    for (std::size_t i : s.support) s.x[i] = rng.normal();
    nrm = norm2(s.x);
  } while (nrm < 1e-300);  // redraw the (measure-zero) all-tiny case
  for (std::size_t i : s.support) s.x[i] /= nrm;
  return s;
}

// m x n sensing matrix, entries i.i.d. N(0,1), filled row-major.
inline Matrix gen_random_phi(std::size_t m, std::size_t n, Rng& rng) {
  Matrix phi(m, n);
  for (double& v : phi.data) v = rng.normal();
  return phi;
}

// Squared l2 distance. Averaging over realizations happens in the harness.
inline double mse(const Vector& x, const Vector& xhat) {
  if (x.size() != xhat.size())
    throw ContractViolation("mse: length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - xhat[i];
    acc += d * d;
  }
  return acc;
}

}  // namespace obcs
