#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "nonadiabat/errors.hpp"
#include "nonadiabat/rng.hpp"

namespace nonadiabat {

inline double mean(std::span<const double> xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

inline double sample_sd(std::span<const double> xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean(xs);
  double s = 0.0;
  for (double x : xs) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(xs.size() - 1));
}

/// Nonparametric bootstrap standard error of the sample mean.
inline double bootstrap_se(std::span<const double> xs, int resamples, Rng& rng) {
  if (xs.size() < 2) return 0.0;
  std::vector<double> means;
  means.reserve(static_cast<std::size_t>(resamples));
  const std::size_t n = xs.size();
  for (int b = 0; b < resamples; ++b) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += xs[rng.index(n)];
    means.push_back(s / static_cast<double>(n));
  }
  return sample_sd(means);
}

struct ValueWithError {
  double value = 0.0;
  double stderror = 0.0;
};

}  // namespace nonadiabat
