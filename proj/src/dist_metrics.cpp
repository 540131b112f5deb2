// SPDX-License-Identifier: Apache-2.0
#include "tokimp/dist_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "tokimp/error.hpp"

namespace tokimp {

namespace {

// sum_i a_i ln(a_i / max(b_i, floor)) with 0 ln(.) = 0.
double kl_terms(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    fail(ErrorKind::Dimension, "vocab size mismatch: " + std::to_string(a.size()) +
                                   " vs " + std::to_string(b.size()));
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] <= 0.0) continue;
    sum += a[i] * std::log(a[i] / std::max(b[i], kKlFloor));
  }
  if (sum < 0.0 && sum >= -kKlNegativeSlack) return 0.0;
  return sum;
}

}  // namespace

ProbDist::ProbDist(std::vector<double> probs) : probs_(std::move(probs)) {
  if (probs_.size() < 2) {
    fail(ErrorKind::Validation, "distribution needs at least 2 entries, got " +
                                    std::to_string(probs_.size()));
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < probs_.size(); ++i) {
    const double p = probs_[i];
    if (!std::isfinite(p)) {
      fail(ErrorKind::InvalidInput, "non-finite probability at index " + std::to_string(i));
    }
    if (p < 0.0 || p > 1.0) {
      fail(ErrorKind::Validation, "probability out of [0,1] at index " + std::to_string(i));
    }
    sum += p;
  }
  if (std::abs(sum - 1.0) > kSumTolerance) {
    fail(ErrorKind::Validation, "probabilities sum to " + std::to_string(sum));
  }
}

ProbDist ProbDist::uniform(std::size_t vocab_size) {
  return ProbDist(std::vector<double>(vocab_size, 1.0 / static_cast<double>(vocab_size)));
}

ProbDist ProbDist::one_hot(std::size_t vocab_size, std::size_t index) {
  std::vector<double> p(vocab_size, 0.0);
  if (index >= vocab_size) fail(ErrorKind::InvalidInput, "one-hot index out of range");
  p[index] = 1.0;
  return ProbDist(std::move(p));
}

void TokenRecord::validate() const {
  if (student.vocab_size() != teacher.vocab_size()) {
    fail(ErrorKind::Dimension, "student/teacher vocab mismatch at position " +
                                   std::to_string(position));
  }
  if (sampled_token >= student.vocab_size()) {
    fail(ErrorKind::Validation, "sampled_token out of range at position " +
                                    std::to_string(position));
  }
}

ProbDist softmax(std::span<const double> logits) {
  if (logits.size() < 2) fail(ErrorKind::InvalidInput, "softmax needs at least 2 logits");
  double max = -INFINITY;
  for (double z : logits) {
    if (!std::isfinite(z)) fail(ErrorKind::InvalidInput, "non-finite logit");
    max = std::max(max, z);
  }
  std::vector<double> out(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - max);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return ProbDist(std::move(out));
}

double entropy_nats(const ProbDist& p) {
  double h = 0.0;
  for (double v : p.probs()) {
    if (v > 0.0) h -= v * std::log(v);
  }
  return std::max(h, 0.0);
}

double normalized_entropy(const ProbDist& p) {
  // Summation rounding would otherwise leave a uniform row a few ulps
  // short of 1.
  const auto probs = p.probs();
  if (std::all_of(probs.begin(), probs.end(), [&](double v) { return v == probs[0]; })) return 1.0;
  const double h = entropy_nats(p) / std::log(static_cast<double>(p.vocab_size()));
  return std::clamp(h, 0.0, 1.0);
}

double reverse_kl(const ProbDist& student, const ProbDist& teacher) {
  return kl_terms(student.probs(), teacher.probs());
}

double forward_kl(const ProbDist& student, const ProbDist& teacher) {
  return kl_terms(teacher.probs(), student.probs());
}

MeanStd teacher_entropy_stats(std::span<const TokenRecord> batch) {
  if (batch.empty()) fail(ErrorKind::EmptyInput, "teacher entropy stats of empty batch");
  std::vector<double> h;
  h.reserve(batch.size());
  for (const auto& r : batch) h.push_back(normalized_entropy(r.teacher));
  double mean = 0.0;
  for (double v : h) mean += v;
  mean /= static_cast<double>(h.size());
  double var = 0.0;
  for (double v : h) var += (v - mean) * (v - mean);
  var /= static_cast<double>(h.size());
  return {mean, std::sqrt(var)};
}

}  // namespace tokimp
