// SPDX-License-Identifier: Apache-2.0
#include "tokimp/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "tokimp/error.hpp"

namespace tokimp {

namespace {

constexpr double kDegenerateSpread = 1e-12;

void require_unit(double v, const char* name) {
  if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
    fail(ErrorKind::InvalidInput, std::string(name) + " must lie in [0, 1], got " +
                                      std::to_string(v));
  }
}

}  // namespace

const char* to_string(Quadrant q) noexcept {
  switch (q) {
    case Quadrant::Q1: return "Q1";
    case Quadrant::Q2: return "Q2";
    case Quadrant::Q3: return "Q3";
    case Quadrant::Q4: return "Q4";
  }
  return "?";
}

std::vector<double> minmax_normalize(std::span<const double> values) {
  if (values.empty()) fail(ErrorKind::EmptyInput, "min-max normalization of empty input");
  double lo = values[0];
  double hi = values[0];
  for (double v : values) {
    if (!std::isfinite(v)) fail(ErrorKind::InvalidInput, "non-finite value in normalization");
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  std::vector<double> out(values.size(), 0.0);
  const double spread = hi - lo;
  if (spread <= kDegenerateSpread) return out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    out[i] = std::clamp((values[i] - lo) / spread, 0.0, 1.0);
  }
  return out;
}

double softor(double h_hat, double delta_hat) {
  require_unit(h_hat, "h_hat");
  require_unit(delta_hat, "delta_hat");
  return h_hat + delta_hat - h_hat * delta_hat;
}

double q3_score(double delta_fwd, double h_hat) {
  if (!std::isfinite(delta_fwd) || delta_fwd < 0.0) {
    fail(ErrorKind::InvalidInput, "delta_fwd must be finite and non-negative");
  }
  require_unit(h_hat, "h_hat");
  return delta_fwd * (1.0 - h_hat);
}

std::vector<TokenMetrics> score_from_raw(std::span<const double> h,
                                         std::span<const double> delta_rev,
                                         std::span<const double> delta_fwd) {
  if (h.size() != delta_rev.size() || h.size() != delta_fwd.size()) {
    fail(ErrorKind::Dimension, "metric axes differ in length");
  }
  const auto h_hat = minmax_normalize(h);
  const auto d_hat = minmax_normalize(delta_rev);
  std::vector<TokenMetrics> out(h.size());
  for (std::size_t i = 0; i < h.size(); ++i) {
    auto& m = out[i];
    m.position = i;
    m.h = h[i];
    m.delta_rev = delta_rev[i];
    m.delta_fwd = delta_fwd[i];
    m.h_hat = h_hat[i];
    m.delta_hat = d_hat[i];
    m.conf = 1.0 - m.h_hat;
    m.softor = softor(m.h_hat, m.delta_hat);
    m.q3_score = q3_score(m.delta_fwd, m.h_hat);
  }
  return out;
}

std::vector<TokenMetrics> score_batch(std::span<const TokenRecord> batch) {
  if (batch.empty()) fail(ErrorKind::EmptyInput, "score_batch on empty batch");
  const std::size_t vocab = batch.front().student.vocab_size();
  std::vector<double> h(batch.size()), rev(batch.size()), fwd(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& r = batch[i];
    try {
      r.validate();
      if (r.student.vocab_size() != vocab) {
        fail(ErrorKind::Dimension, "vocab size differs from the batch's first record");
      }
      h[i] = normalized_entropy(r.student);
      rev[i] = reverse_kl(r.student, r.teacher);
      fwd[i] = forward_kl(r.student, r.teacher);
    } catch (const Error& e) {
      throw Error(e.kind(), "position " + std::to_string(r.position) + ": " + e.what());
    }
  }
  auto out = score_from_raw(h, rev, fwd);
  for (std::size_t i = 0; i < batch.size(); ++i) out[i].position = batch[i].position;
  return out;
}

}  // namespace tokimp
