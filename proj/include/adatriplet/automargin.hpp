#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "adatriplet/errors.hpp"
#include "adatriplet/losses.hpp"

namespace adatriplet {

// Largest epsilon MarginState accepts; raw update values are clamped to it.
inline constexpr double kEpsilonMax = 2.0 - 1e-9;

// Batch summary statistics: means of delta and phi_an over the batch triplets.
struct BatchStats {
  double mu_delta = 0.0;
  double mu_an = 0.0;
  std::size_t count = 0;
};

struct AutoMarginConfig {
  int k_delta;
  int k_an;

  explicit AutoMarginConfig(int kd = 2, int ka = 2) : k_delta(kd), k_an(ka) {
    if (k_delta < 1 || k_an < 1)
      throw std::invalid_argument("AutoMarginConfig: constants must be positive integers");
  }
};

inline BatchStats batch_stats(std::span<const TripletSims> sims) {
  if (sims.empty()) throw EmptyBatchError("batch_stats: empty batch");
  double sum_delta = 0.0;
  double sum_an = 0.0;
  for (const TripletSims& s : sims) {
    sum_delta += s.delta;
    sum_an += s.phi_an;
  }
  const double n = static_cast<double>(sims.size());
  return {sum_delta / n, sum_an / n, sims.size()};
}

struct MarginPair {
  double epsilon;
  double beta;
};

// epsilon(t) = mu_delta(t) / K_delta, beta(t) = 1 + (mu_an(t) - 1) / K_an,
// clamped into the legal margin ranges.
inline MarginPair update_margins(const BatchStats& stats, const AutoMarginConfig& cfg) {
  const double eps = std::clamp(stats.mu_delta / cfg.k_delta, 0.0, kEpsilonMax);
  const double beta = std::clamp(1.0 + (stats.mu_an - 1.0) / cfg.k_an, 0.0, 1.0);
  return {eps, beta};
}

enum class Quartile { Q1, Q2 };

// Linear interpolation between closest ranks of the sorted sample.
inline double quantile(std::vector<double> values, double p) {
  if (values.empty()) throw EmptyBatchError("quantile: empty sample");
  std::sort(values.begin(), values.end());
  const double h = p * static_cast<double>(values.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(h);
  if (lo + 1 >= values.size()) return values.back();
  const double frac = h - static_cast<double>(lo);
  return values[lo] + frac * (values[lo + 1] - values[lo]);
}

// Quartile baseline: margins from the Q1 or Q2 quartile of the batch's delta
// and phi_an samples.
inline MarginPair quartile_margins(std::span<const double> deltas,
                                   std::span<const double> phi_ans, Quartile q) {
  if (deltas.empty() || phi_ans.empty())
    throw EmptyBatchError("quartile_margins: empty sample");
  const double p = (q == Quartile::Q1) ? 0.25 : 0.5;
  const double eps = std::clamp(quantile({deltas.begin(), deltas.end()}, p), 0.0, kEpsilonMax);
  const double beta = std::clamp(quantile({phi_ans.begin(), phi_ans.end()}, p), 0.0, 1.0);
  return {eps, beta};
}

}  // namespace adatriplet
