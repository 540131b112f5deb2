// SPDX-License-Identifier: Apache-2.0
#include "tokimp/taxonomy.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "tokimp/error.hpp"

namespace tokimp {

QuadrantThresholds QuadrantThresholds::fixed(double tau_h, double tau_d) {
  for (double t : {tau_h, tau_d}) {
    if (!std::isfinite(t) || t < 0.0 || t > 1.0) {
      fail(ErrorKind::InvalidInput, "thresholds must lie in [0, 1]");
    }
  }
  return {tau_h, tau_d, Mode::Fixed};
}

double median(std::span<const double> values) {
  if (values.empty()) fail(ErrorKind::EmptyInput, "median of empty input");
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

QuadrantThresholds resolve_thresholds(std::span<const TokenMetrics> metrics,
                                      const QuadrantThresholds& th) {
  if (th.mode == QuadrantThresholds::Mode::Fixed) return th;
  if (metrics.empty()) fail(ErrorKind::EmptyInput, "median thresholds of empty batch");
  std::vector<double> h, d;
  h.reserve(metrics.size());
  d.reserve(metrics.size());
  for (const auto& m : metrics) {
    h.push_back(m.h_hat);
    d.push_back(m.delta_hat);
  }
  return {median(h), median(d), QuadrantThresholds::Mode::BatchMedian};
}

Quadrant classify(const TokenMetrics& m, const QuadrantThresholds& th) {
  const bool high_h = m.h_hat >= th.tau_h;
  const bool high_d = m.delta_hat >= th.tau_d;
  if (high_h) return high_d ? Quadrant::Q1 : Quadrant::Q2;
  return high_d ? Quadrant::Q3 : Quadrant::Q4;
}

QuadrantThresholds classify_batch(std::span<TokenMetrics> metrics, const QuadrantThresholds& th) {
  const auto resolved = resolve_thresholds(metrics, th);
  for (auto& m : metrics) m.quadrant = classify(m, resolved);
  return resolved;
}

QuadrantHistogram quadrant_histogram(std::span<const TokenMetrics> metrics,
                                     const QuadrantThresholds& th) {
  if (metrics.empty()) fail(ErrorKind::EmptyInput, "histogram of empty batch");
  QuadrantHistogram hist;
  hist.thresholds = resolve_thresholds(metrics, th);
  for (const auto& m : metrics) ++hist.counts[static_cast<std::size_t>(classify(m, hist.thresholds))];
  hist.total = metrics.size();
  for (std::size_t q = 0; q < 4; ++q) {
    hist.fractions[q] = static_cast<double>(hist.counts[q]) / static_cast<double>(hist.total);
  }
  return hist;
}

}  // namespace tokimp
