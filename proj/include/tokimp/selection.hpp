// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "tokimp/rng.hpp"
#include "tokimp/scoring.hpp"

namespace tokimp {

enum class Strategy { EntropySample, SoftorTopk, Q3Topk, DivTopk, SoftorBottomk, All };

const char* to_string(Strategy s) noexcept;
/// Accepts the CLI spellings ("entropy-sample", "softor-topk", ...).
std::optional<Strategy> parse_strategy(std::string_view name) noexcept;

/// Retained batch indices, sorted ascending, plus what produced them.
struct SelectionMask {
  std::vector<std::size_t> retained;
  std::size_t total = 0;
  double rho = 1.0;
  Strategy strategy = Strategy::All;
  std::optional<std::uint64_t> seed;

  friend bool operator==(const SelectionMask&, const SelectionMask&) = default;
};

/// floor(rho * m), promoted to 1 when that is 0. Rejects rho outside (0, 1].
std::size_t budget(double rho, std::size_t m);

/// k highest scores; ties go to the lower index.
SelectionMask topk_by_score(std::span<const double> scores, double rho);
/// k lowest scores; ties go to the lower index.
SelectionMask bottomk_by_score(std::span<const double> scores, double rho);

SelectionMask softor_topk(std::span<const TokenMetrics> metrics, double rho);
SelectionMask q3_topk(std::span<const TokenMetrics> metrics, double rho);
SelectionMask div_topk(std::span<const TokenMetrics> metrics, double rho);
SelectionMask softor_bottomk(std::span<const TokenMetrics> metrics, double rho);

/// Budgeted sampling without replacement, inclusion tendency proportional
/// to the weights. Each index draws u_i in (0, 1] from Rng(seed) in index
/// order and gets key ln(u_i) / w_i (the log of u_i^(1/w_i)); the k largest
/// keys win. Zero-weight indices rank last. All-zero weights fall back to
/// uniform.
SelectionMask weighted_sample(std::span<const double> weights, double rho, std::uint64_t seed);

/// weighted_sample over the normalized student entropy h.
SelectionMask entropy_sample(std::span<const TokenMetrics> metrics, double rho,
                             std::uint64_t seed);

SelectionMask select_all(std::size_t m);

/// Dispatch by strategy. The seed is only consulted by EntropySample.
SelectionMask select(std::span<const TokenMetrics> metrics, Strategy strategy, double rho,
                     std::uint64_t seed);

/// Mean reverse KL over retained positions.
double masked_loss(std::span<const TokenMetrics> metrics, const SelectionMask& mask);

/// Independent inclusion probabilities for the importance-weighted estimator.
struct ISWeights {
  std::vector<double> inclusion_probs;

  /// Each entry must be finite and in [0, 1].
  explicit ISWeights(std::vector<double> probs);
  double weight(std::size_t t) const { return 1.0 / inclusion_probs[t]; }
  std::size_t size() const noexcept { return inclusion_probs.size(); }
};

/// Draws one Bernoulli(p_t) per index in order; returns included indices.
std::vector<std::size_t> bernoulli_include(const ISWeights& probs, Rng& rng);

/// (1/m) sum_{t in sample} v_t / p_t. Error{Bias} if any p_t == 0 while
/// v_t != 0.
double is_estimate(std::span<const double> values, std::span<const std::size_t> sample,
                   const ISWeights& probs);

/// (1/m^2) sum_t (1 - p_t) / p_t * E||g_t||^2. Requires p_t in (0, 1].
double is_variance(std::span<const double> sq_norms, const ISWeights& probs);

namespace detail {
/// Indices ordered by (score desc, index asc), or ascending scores when
/// `descending` is false. Optionally counts comparator calls.
std::vector<std::size_t> rank(std::span<const double> scores, bool descending,
                              std::size_t* comparisons = nullptr);
}  // namespace detail

}  // namespace tokimp
