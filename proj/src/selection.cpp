// SPDX-License-Identifier: Apache-2.0
#include "tokimp/selection.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "tokimp/error.hpp"

namespace tokimp {

namespace {

struct StrategyName {
  Strategy strategy;
  std::string_view name;
};

constexpr StrategyName kStrategyNames[] = {
    {Strategy::EntropySample, "entropy-sample"}, {Strategy::SoftorTopk, "softor-topk"},
    {Strategy::Q3Topk, "q3-topk"},               {Strategy::DivTopk, "div-topk"},
    {Strategy::SoftorBottomk, "softor-bottomk"}, {Strategy::All, "all"},
};

SelectionMask take_prefix(std::vector<std::size_t> order, std::size_t k, std::size_t m,
                          double rho, Strategy strategy) {
  order.resize(k);
  std::sort(order.begin(), order.end());
  return {std::move(order), m, rho, strategy, std::nullopt};
}

template <typename Proj>
std::vector<double> column(std::span<const TokenMetrics> metrics, Proj proj) {
  std::vector<double> out;
  out.reserve(metrics.size());
  for (const auto& m : metrics) out.push_back(proj(m));
  return out;
}

}  // namespace

const char* to_string(Strategy s) noexcept {
  for (const auto& e : kStrategyNames) {
    if (e.strategy == s) return e.name.data();
  }
  return "?";
}

std::optional<Strategy> parse_strategy(std::string_view name) noexcept {
  for (const auto& e : kStrategyNames) {
    if (e.name == name) return e.strategy;
  }
  return std::nullopt;
}

std::size_t budget(double rho, std::size_t m) {
  if (!std::isfinite(rho) || rho <= 0.0 || rho > 1.0) {
    fail(ErrorKind::InvalidInput, "rho must lie in (0, 1], got " + std::to_string(rho));
  }
  if (m == 0) fail(ErrorKind::EmptyInput, "selection over an empty batch");
  // The slack absorbs products like 0.29 * 100 = 28.999999999999996.
  const auto k = static_cast<std::size_t>(std::floor(rho * static_cast<double>(m) + 1e-9));
  return std::clamp<std::size_t>(k, 1, m);
}

namespace detail {

std::vector<std::size_t> rank(std::span<const double> scores, bool descending,
                              std::size_t* comparisons) {
  for (double s : scores) {
    if (std::isnan(s)) fail(ErrorKind::InvalidInput, "NaN score");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (comparisons != nullptr) ++*comparisons;
    if (scores[a] != scores[b]) return descending ? scores[a] > scores[b] : scores[a] < scores[b];
    return a < b;
  });
  return order;
}

}  // namespace detail

SelectionMask topk_by_score(std::span<const double> scores, double rho) {
  const std::size_t k = budget(rho, scores.size());
  return take_prefix(detail::rank(scores, true), k, scores.size(), rho, Strategy::SoftorTopk);
}

SelectionMask bottomk_by_score(std::span<const double> scores, double rho) {
  const std::size_t k = budget(rho, scores.size());
  return take_prefix(detail::rank(scores, false), k, scores.size(), rho,
                     Strategy::SoftorBottomk);
}

SelectionMask softor_topk(std::span<const TokenMetrics> metrics, double rho) {
  auto mask = topk_by_score(column(metrics, [](const auto& m) { return m.softor; }), rho);
  mask.strategy = Strategy::SoftorTopk;
  return mask;
}

SelectionMask q3_topk(std::span<const TokenMetrics> metrics, double rho) {
  auto mask = topk_by_score(column(metrics, [](const auto& m) { return m.q3_score; }), rho);
  mask.strategy = Strategy::Q3Topk;
  return mask;
}

SelectionMask div_topk(std::span<const TokenMetrics> metrics, double rho) {
  auto mask = topk_by_score(column(metrics, [](const auto& m) { return m.delta_rev; }), rho);
  mask.strategy = Strategy::DivTopk;
  return mask;
}

SelectionMask softor_bottomk(std::span<const TokenMetrics> metrics, double rho) {
  auto mask = bottomk_by_score(column(metrics, [](const auto& m) { return m.softor; }), rho);
  mask.strategy = Strategy::SoftorBottomk;
  return mask;
}

SelectionMask weighted_sample(std::span<const double> weights, double rho, std::uint64_t seed) {
  const std::size_t m = weights.size();
  const std::size_t k = budget(rho, m);
  bool any_positive = false;
  for (double w : weights) {
    if (!std::isfinite(w) || w < 0.0) {
      fail(ErrorKind::InvalidInput, "sampling weights must be finite and non-negative");
    }
    any_positive = any_positive || w > 0.0;
  }
  Rng rng(seed);
  std::vector<double> keys(m);
  for (std::size_t i = 0; i < m; ++i) {
    const double u = rng.uniform_open0();
    const double w = any_positive ? weights[i] : 1.0;
    keys[i] = w > 0.0 ? std::log(u) / w : -std::numeric_limits<double>::infinity();
  }
  auto mask = take_prefix(detail::rank(keys, true), k, m, rho, Strategy::EntropySample);
  mask.seed = seed;
  return mask;
}

SelectionMask entropy_sample(std::span<const TokenMetrics> metrics, double rho,
                             std::uint64_t seed) {
  return weighted_sample(column(metrics, [](const auto& m) { return m.h; }), rho, seed);
}

SelectionMask select_all(std::size_t m) {
  if (m == 0) fail(ErrorKind::EmptyInput, "selection over an empty batch");
  std::vector<std::size_t> all(m);
  std::iota(all.begin(), all.end(), std::size_t{0});
  return {std::move(all), m, 1.0, Strategy::All, std::nullopt};
}

SelectionMask select(std::span<const TokenMetrics> metrics, Strategy strategy, double rho,
                     std::uint64_t seed) {
  switch (strategy) {
    case Strategy::EntropySample: return entropy_sample(metrics, rho, seed);
    case Strategy::SoftorTopk: return softor_topk(metrics, rho);
    case Strategy::Q3Topk: return q3_topk(metrics, rho);
    case Strategy::DivTopk: return div_topk(metrics, rho);
    case Strategy::SoftorBottomk: return softor_bottomk(metrics, rho);
    case Strategy::All: return select_all(metrics.size());
  }
  fail(ErrorKind::InvalidInput, "unknown strategy");
}

double masked_loss(std::span<const TokenMetrics> metrics, const SelectionMask& mask) {
  if (mask.retained.empty()) fail(ErrorKind::EmptySelection, "masked loss over empty mask");
  double sum = 0.0;
  for (std::size_t t : mask.retained) {
    if (t >= metrics.size()) fail(ErrorKind::InvalidInput, "mask position out of range");
    sum += metrics[t].delta_rev;
  }
  return sum / static_cast<double>(mask.retained.size());
}

ISWeights::ISWeights(std::vector<double> probs) : inclusion_probs(std::move(probs)) {
  for (double p : inclusion_probs) {
    if (!std::isfinite(p) || p < 0.0 || p > 1.0) {
      fail(ErrorKind::InvalidInput, "inclusion probabilities must lie in [0, 1]");
    }
  }
}

std::vector<std::size_t> bernoulli_include(const ISWeights& probs, Rng& rng) {
  std::vector<std::size_t> out;
  for (std::size_t t = 0; t < probs.size(); ++t) {
    if (rng.uniform() < probs.inclusion_probs[t]) out.push_back(t);
  }
  return out;
}

double is_estimate(std::span<const double> values, std::span<const std::size_t> sample,
                   const ISWeights& probs) {
  if (values.size() != probs.size()) fail(ErrorKind::Dimension, "values/probs length mismatch");
  if (values.empty()) fail(ErrorKind::EmptyInput, "estimate over empty batch");
  for (std::size_t t = 0; t < values.size(); ++t) {
    if (probs.inclusion_probs[t] == 0.0 && values[t] != 0.0) {
      fail(ErrorKind::Bias, "position " + std::to_string(t) +
                                " has zero inclusion probability but nonzero value");
    }
  }
  double sum = 0.0;
  for (std::size_t t : sample) {
    if (t >= values.size()) fail(ErrorKind::InvalidInput, "sample position out of range");
    if (probs.inclusion_probs[t] > 0.0) sum += values[t] * probs.weight(t);
  }
  return sum / static_cast<double>(values.size());
}

double is_variance(std::span<const double> sq_norms, const ISWeights& probs) {
  if (sq_norms.size() != probs.size()) fail(ErrorKind::Dimension, "norms/probs length mismatch");
  if (sq_norms.empty()) fail(ErrorKind::EmptyInput, "variance over empty batch");
  double sum = 0.0;
  for (std::size_t t = 0; t < sq_norms.size(); ++t) {
    const double p = probs.inclusion_probs[t];
    if (p <= 0.0) fail(ErrorKind::InvalidInput, "inclusion probability must be positive");
    sum += (1.0 - p) / p * sq_norms[t];
  }
  const double m = static_cast<double>(sq_norms.size());
  return sum / (m * m);
}

}  // namespace tokimp
