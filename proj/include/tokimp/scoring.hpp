// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "tokimp/dist_metrics.hpp"

namespace tokimp {

enum class Quadrant { Q1, Q2, Q3, Q4 };

const char* to_string(Quadrant q) noexcept;

/// Per-token metric bundle. Normalized fields are relative to the batch the
/// token was scored with.
struct TokenMetrics {
  std::size_t position = 0;
  double h = 0.0;          // normalized student entropy
  double delta_rev = 0.0;  // D_KL(student || teacher), nats
  double delta_fwd = 0.0;  // D_KL(teacher || student), nats
  double h_hat = 0.0;
  double delta_hat = 0.0;  // min-max of delta_rev
  double conf = 1.0;       // 1 - h_hat
  double softor = 0.0;
  double q3_score = 0.0;
  std::optional<Quadrant> quadrant;
};

/// (v - min) / (max - min); an all-equal input (spread <= 1e-12) maps to
/// zeros, which also covers the singleton case.
std::vector<double> minmax_normalize(std::span<const double> values);

/// 1 - (1 - h_hat)(1 - delta_hat). Both inputs must lie in [0, 1].
double softor(double h_hat, double delta_hat);

/// delta_fwd * (1 - h_hat).
double q3_score(double delta_fwd, double h_hat);

/// Scores one normalization batch. Output order matches input order.
std::vector<TokenMetrics> score_batch(std::span<const TokenRecord> batch);

/// Same as score_batch but from already-computed raw axes; used where
/// distributions are not available (reported values, flat buffers).
std::vector<TokenMetrics> score_from_raw(std::span<const double> h,
                                         std::span<const double> delta_rev,
                                         std::span<const double> delta_fwd);

}  // namespace tokimp
