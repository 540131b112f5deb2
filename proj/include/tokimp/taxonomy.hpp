// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <span>

#include "tokimp/scoring.hpp"

namespace tokimp {

/// Cutoffs over h_hat and delta_hat. In BatchMedian mode tau_h / tau_d are
/// ignored and replaced by the batch medians at classification time.
/// A value equal to its cutoff counts as high.
struct QuadrantThresholds {
  enum class Mode { Fixed, BatchMedian };

  double tau_h = 0.5;
  double tau_d = 0.5;
  Mode mode = Mode::BatchMedian;

  static QuadrantThresholds fixed(double tau_h, double tau_d);
  static QuadrantThresholds batch_median() { return {}; }
};

/// Concrete cutoffs for a batch (the medians in BatchMedian mode).
QuadrantThresholds resolve_thresholds(std::span<const TokenMetrics> metrics,
                                      const QuadrantThresholds& th);

/// Uses th.tau_h / th.tau_d as given; call resolve_thresholds first for
/// median mode.
Quadrant classify(const TokenMetrics& m, const QuadrantThresholds& th);

/// Resolves thresholds over the batch and writes a label into each token.
QuadrantThresholds classify_batch(std::span<TokenMetrics> metrics, const QuadrantThresholds& th);

struct QuadrantHistogram {
  std::array<std::size_t, 4> counts{};
  std::array<double, 4> fractions{};
  std::size_t total = 0;
  QuadrantThresholds thresholds;
};

QuadrantHistogram quadrant_histogram(std::span<const TokenMetrics> metrics,
                                     const QuadrantThresholds& th);

double median(std::span<const double> values);

}  // namespace tokimp
