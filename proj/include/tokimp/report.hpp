// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <string>
#include <vector>

#include "tokimp/dist_metrics.hpp"
#include "tokimp/selection.hpp"
#include "tokimp/taxonomy.hpp"

namespace tokimp::io {

/// Everything computed for one normalization batch.
struct BatchAnalysis {
  std::string label;  // rollout_id when batching by rollout, else the batch index
  std::vector<TokenMetrics> metrics;  // quadrant filled
  QuadrantHistogram histogram;
  MeanStd teacher_entropy;
  std::vector<SelectionMask> masks;
};

/// Scores, classifies and summarizes a batch.
BatchAnalysis analyze_batch(std::span<const TokenRecord> batch, const QuadrantThresholds& th,
                            std::string label);

/// Per-token CSV. Columns:
/// batch,position,h,delta_rev,delta_fwd,h_hat,delta_hat,softor,q3_score,quadrant
/// followed by one sel_<strategy> 0/1 column per mask of the first batch.
std::string render_metrics_csv(std::span<const BatchAnalysis> batches);

/// Summary JSON: thresholds, quadrant counts/fractions, teacher-entropy
/// mean/std and retention counts per batch.
std::string render_summary(std::span<const BatchAnalysis> batches);

/// One JSON object per line per mask:
/// {"batch":..,"strategy":..,"rho":..,"seed":..|null,"total":..,"retained":[..]}
std::string render_masks(std::span<const BatchAnalysis> batches);

/// Writes metrics.csv and summary.json into `directory` (created if absent).
void emit_report(std::span<const BatchAnalysis> batches, const std::string& directory);

}  // namespace tokimp::io
