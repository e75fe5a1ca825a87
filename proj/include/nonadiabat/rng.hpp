#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

#include "nonadiabat/core.hpp"

namespace nonadiabat {

/// Deterministic random stream. Wraps std::mt19937_64 but derives uniforms and
/// normals itself so that sequences are identical across standard libraries;
/// reproducibility of seeded runs is part of the output contract.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform in [0, 1) with 53-bit resolution.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller (two draws per call, no caching).
  double normal() {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Uniform integer in [0, n).
  std::size_t index(std::size_t n) {
    return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n;
  }

 private:
  std::mt19937_64 engine_;
};

inline Complex complex_normal(Rng& rng) { return {rng.normal(), rng.normal()}; }

/// Haar-like random unitary: QR of a complex Gaussian matrix with the phase
/// convention that makes R's diagonal real positive (deterministic per seed).
inline Matrix random_unitary(Eigen::Index dim, Rng& rng) {
  Matrix g(dim, dim);
  for (Eigen::Index j = 0; j < dim; ++j)
    for (Eigen::Index i = 0; i < dim; ++i) g(i, j) = complex_normal(rng);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ();
  Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < dim; ++j) {
    const Complex d = r(j, j);
    const double mag = std::abs(d);
    if (mag > 0) q.col(j) *= d / mag;
  }
  return q;
}

/// Random full-rank density matrix G G^dag / Tr, optionally ridge-mixed with
/// the maximally mixed state to bound the smallest eigenvalue away from zero.
inline DensityMatrix random_density(Eigen::Index dim, Rng& rng, double ridge = 0.0) {
  Matrix g(dim, dim);
  for (Eigen::Index j = 0; j < dim; ++j)
    for (Eigen::Index i = 0; i < dim; ++i) g(i, j) = complex_normal(rng);
  Matrix w = g * g.adjoint();
  w /= w.trace().real();
  if (ridge > 0.0) {
    w = (1.0 - ridge) * w;
    w += (ridge / static_cast<double>(dim)) * Matrix::Identity(dim, dim);
  }
  return validate_density(w);
}

}  // namespace nonadiabat
