// SPDX-License-Identifier: Apache-2.0
#pragma once

/**
 * @file oracle_theory.hpp
 * @brief Separable one-step descent surrogate and its closed-form optimum.
 *
 * For per-token gradient moments phi_t = <grad L, E g_t> and M_t = E||g_t||^2,
 * a weighted step sum_t w_t g_t with step size eta on a beta-smooth loss
 * changes the expected loss by at most (up to dropped cross-token terms)
 *
 *   sum_t ( -eta w_t phi_t + (eta^2 beta / 2) w_t^2 M_t ).
 *
 * Each term is a parabola in w_t, minimized at phi_t / (eta beta M_t) with
 * value -phi_t^2 / (2 beta M_t). Cross-token covariance is not modelled.
 */

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tokimp/scoring.hpp"

namespace tokimp {

struct OracleInstance {
  std::vector<double> phi;
  std::vector<double> M;
  double eta = 1.0;
  double beta = 1.0;
  std::optional<std::vector<double>> mu_norm;  // informational only

  std::size_t size() const noexcept { return phi.size(); }
  /// Throws Error{Dimension} on length mismatch, Error{InvalidInput} on
  /// non-positive M, eta or beta.
  void validate() const;
};

double descent_bound(const OracleInstance& inst, std::span<const double> w);
std::vector<double> oracle_weight(const OracleInstance& inst);
std::vector<double> oracle_descent(const OracleInstance& inst);

/// Per-coordinate derivative of the surrogate at w.
std::vector<double> descent_bound_gradient(const OracleInstance& inst, std::span<const double> w);

/// Four tokens in Q1..Q4 order sharing eta and beta. The defaults are
/// synthetic values shaped to the qualitative structure (large/moderate/
/// small-positive/near-zero alignment), not measured data.
struct QuadrantArchetypes {
  std::array<double, 4> phi{2.0, 1.0, 0.3, 0.005};
  std::array<double, 4> M{1.0, 0.8, 0.4, 0.3};
  double eta = 1.0;
  double beta = 1.0;

  OracleInstance instance() const;
};

struct OrderingReport {
  std::array<double, 4> weights{};    // w* for Q1..Q4
  std::array<Quadrant, 4> order{};    // quadrants by descending w*
  bool strictly_ordered = false;      // Q1 > Q2 > Q3 > Q4
  bool q4_negligible = false;         // |w*_Q4| <= w*_Q3 / 10
  bool passed() const { return strictly_ordered && q4_negligible; }
};

/// Error{Config} if the archetypes break the qualitative preconditions:
/// positive alignment for Q1..Q3, Q1 alignment >= Q2 alignment, Q3 energy
/// <= Q1 energy, and |phi_Q4| at most a tenth of the smallest of the others.
OrderingReport quadrant_ordering_demo(const QuadrantArchetypes& archetypes);

struct EntropyRule {
  std::string name;
  double threshold = -1.0;  // < 0 means identity f(h) = h
  double operator()(double h_hat) const;
};

/// f(h) = h and f(h) = 1[h >= tau] for tau in {0.1, 0.3, 0.5}.
std::vector<EntropyRule> entropy_rule_family();

struct BlindSpotReport {
  std::size_t q3_index = 0;
  std::size_t q4_index = 0;
  double q3_h_hat = 0.0, q3_delta_hat = 0.0;
  double q4_h_hat = 0.0, q4_delta_hat = 0.0;
  std::vector<std::string> rule_names;
  std::vector<double> rule_q3;  // entropy-only scores of the planted token
  std::vector<double> rule_q4;
  double softor_q3 = 0.0;
  double softor_q4 = 0.0;
  double separation = 0.0;  // softor_q3 - softor_q4
  bool passed = false;
};

/// Picks the first token with h_hat < 0.05, delta_hat > 0.5 and the first
/// with h_hat < 0.05, delta_hat < 0.05. Error{Config} if either is missing.
BlindSpotReport blind_spot_demo(std::span<const TokenMetrics> metrics);

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Argmin of a single-token surrogate term over `points` evenly spaced
/// values in [lo, hi].
double grid_argmin(double phi, double M, double eta, double beta, double lo, double hi,
                   std::size_t points);

/// Random instance with |w*| <= 10 for every token.
OracleInstance random_instance(std::size_t tokens, std::uint64_t seed);

/// Full self-check suite over `seeds` random instances and batches.
std::vector<CheckResult> run_oracle_checks(std::size_t seeds);

}  // namespace tokimp
