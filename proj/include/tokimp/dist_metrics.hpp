// SPDX-License-Identifier: Apache-2.0
#pragma once

/**
 * @file dist_metrics.hpp
 * @brief Probability vectors and the per-token information measures.
 *
 * Everything is in nats. Entropy is normalized by ln|V| using the declared
 * vocabulary size of the distribution, not its support. KL terms treat
 * 0 * ln(.) as 0 on the weighting side and clamp the denominator at
 * kKlFloor so a student mass where the teacher has none stays finite.
 */

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace tokimp {

inline constexpr double kSumTolerance = 1e-6;
inline constexpr double kKlFloor = 1e-12;
inline constexpr double kKlNegativeSlack = 1e-9;

/// Dense probability vector over a vocabulary of size >= 2.
class ProbDist {
 public:
  /// Validates entries in [0, 1] and sum within kSumTolerance of 1.
  /// Throws Error{Validation} otherwise, Error{InvalidInput} on non-finite.
  explicit ProbDist(std::vector<double> probs);

  static ProbDist uniform(std::size_t vocab_size);
  static ProbDist one_hot(std::size_t vocab_size, std::size_t index);

  std::size_t vocab_size() const noexcept { return probs_.size(); }
  std::span<const double> probs() const noexcept { return probs_; }
  double operator[](std::size_t i) const noexcept { return probs_[i]; }

  friend bool operator==(const ProbDist&, const ProbDist&) = default;

 private:
  std::vector<double> probs_;
};

struct TokenRecord {
  std::size_t position = 0;
  ProbDist student;
  ProbDist teacher;
  std::size_t sampled_token = 0;
  std::optional<std::string> rollout_id;

  /// Throws Error{Dimension} on vocab mismatch, Error{Validation} when the
  /// sampled token is out of range.
  void validate() const;
};

/// Max-subtracted softmax. Rejects non-finite logits and length < 2.
ProbDist softmax(std::span<const double> logits);

double entropy_nats(const ProbDist& p);

/// H(p) / ln|V|, in [0, 1].
double normalized_entropy(const ProbDist& p);

/// D_KL(student || teacher).
double reverse_kl(const ProbDist& student, const ProbDist& teacher);

/// D_KL(teacher || student).
double forward_kl(const ProbDist& student, const ProbDist& teacher);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};

/// Mean and population std of normalized teacher entropy over a batch.
MeanStd teacher_entropy_stats(std::span<const TokenRecord> batch);

}  // namespace tokimp
