// SPDX-License-Identifier: Apache-2.0
#include "tokimp/oracle_theory.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "tokimp/error.hpp"
#include "tokimp/rng.hpp"

namespace tokimp {

namespace {

std::string fmt_double(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, v);
  return buf;
}

}  // namespace

void OracleInstance::validate() const {
  if (phi.size() != M.size()) fail(ErrorKind::Dimension, "phi and M differ in length");
  if (mu_norm && mu_norm->size() != phi.size()) {
    fail(ErrorKind::Dimension, "mu_norm length differs from phi");
  }
  if (!(eta > 0.0) || !(beta > 0.0) || !std::isfinite(eta) || !std::isfinite(beta)) {
    fail(ErrorKind::InvalidInput, "eta and beta must be positive");
  }
  for (std::size_t t = 0; t < phi.size(); ++t) {
    if (!std::isfinite(phi[t])) fail(ErrorKind::InvalidInput, "non-finite phi");
    if (!(M[t] > 0.0) || !std::isfinite(M[t])) {
      fail(ErrorKind::InvalidInput, "M must be positive at token " + std::to_string(t));
    }
  }
}

double descent_bound(const OracleInstance& inst, std::span<const double> w) {
  inst.validate();
  if (w.size() != inst.size()) fail(ErrorKind::Dimension, "weight vector length mismatch");
  const double quad = inst.eta * inst.eta * inst.beta / 2.0;
  double sum = 0.0;
  for (std::size_t t = 0; t < w.size(); ++t) {
    if (!std::isfinite(w[t])) fail(ErrorKind::InvalidInput, "non-finite weight");
    sum += -inst.eta * w[t] * inst.phi[t] + quad * w[t] * w[t] * inst.M[t];
  }
  return sum;
}

std::vector<double> descent_bound_gradient(const OracleInstance& inst,
                                           std::span<const double> w) {
  inst.validate();
  if (w.size() != inst.size()) fail(ErrorKind::Dimension, "weight vector length mismatch");
  std::vector<double> g(w.size());
  for (std::size_t t = 0; t < w.size(); ++t) {
    g[t] = -inst.eta * inst.phi[t] + inst.eta * inst.eta * inst.beta * w[t] * inst.M[t];
  }
  return g;
}

std::vector<double> oracle_weight(const OracleInstance& inst) {
  inst.validate();
  std::vector<double> w(inst.size());
  for (std::size_t t = 0; t < w.size(); ++t) {
    w[t] = inst.phi[t] / (inst.eta * inst.beta * inst.M[t]);
  }
  return w;
}

std::vector<double> oracle_descent(const OracleInstance& inst) {
  inst.validate();
  std::vector<double> d(inst.size());
  for (std::size_t t = 0; t < d.size(); ++t) {
    d[t] = -inst.phi[t] * inst.phi[t] / (2.0 * inst.beta * inst.M[t]);
  }
  return d;
}

OracleInstance QuadrantArchetypes::instance() const {
  return {{phi.begin(), phi.end()}, {M.begin(), M.end()}, eta, beta, std::nullopt};
}

OrderingReport quadrant_ordering_demo(const QuadrantArchetypes& a) {
  const auto inst = a.instance();
  try {
    inst.validate();
  } catch (const Error& e) {
    fail(ErrorKind::Config, std::string("archetypes: ") + e.what());
  }
  const double min_positive = std::min({a.phi[0], a.phi[1], a.phi[2]});
  if (!(min_positive > 0.0)) fail(ErrorKind::Config, "Q1..Q3 archetypes need positive phi");
  if (a.phi[0] < a.phi[1]) fail(ErrorKind::Config, "Q1 alignment must be at least Q2's");
  if (a.M[2] > a.M[0]) fail(ErrorKind::Config, "Q3 gradient energy must not exceed Q1's");
  if (std::abs(a.phi[3]) > 0.1 * min_positive) {
    fail(ErrorKind::Config, "Q4 alignment must be near zero");
  }

  OrderingReport report;
  const auto w = oracle_weight(inst);
  std::copy(w.begin(), w.end(), report.weights.begin());
  std::array<std::size_t, 4> idx{0, 1, 2, 3};
  std::stable_sort(idx.begin(), idx.end(), [&](auto x, auto y) { return w[x] > w[y]; });
  for (std::size_t i = 0; i < 4; ++i) report.order[i] = static_cast<Quadrant>(idx[i]);
  report.strictly_ordered = w[0] > w[1] && w[1] > w[2] && w[2] > w[3];
  report.q4_negligible = std::abs(w[3]) <= w[2] / 10.0;
  return report;
}

double EntropyRule::operator()(double h_hat) const {
  if (threshold < 0.0) return h_hat;
  return h_hat >= threshold ? 1.0 : 0.0;
}

std::vector<EntropyRule> entropy_rule_family() {
  return {{"identity", -1.0}, {"step@0.1", 0.1}, {"step@0.3", 0.3}, {"step@0.5", 0.5}};
}

BlindSpotReport blind_spot_demo(std::span<const TokenMetrics> metrics) {
  std::optional<std::size_t> q3, q4;
  for (std::size_t i = 0; i < metrics.size(); ++i) {
    const auto& m = metrics[i];
    if (m.h_hat >= 0.05) continue;
    if (!q3 && m.delta_hat > 0.5) q3 = i;
    if (!q4 && m.delta_hat < 0.05) q4 = i;
  }
  if (!q3 || !q4) {
    fail(ErrorKind::Config, "blind-spot demo needs a low-entropy token with delta_hat > 0.5 "
                            "and one with delta_hat < 0.05");
  }
  BlindSpotReport r;
  r.q3_index = *q3;
  r.q4_index = *q4;
  const auto& a = metrics[*q3];
  const auto& b = metrics[*q4];
  r.q3_h_hat = a.h_hat;
  r.q3_delta_hat = a.delta_hat;
  r.q4_h_hat = b.h_hat;
  r.q4_delta_hat = b.delta_hat;
  bool entropy_blind = true;
  for (const auto& rule : entropy_rule_family()) {
    r.rule_names.push_back(rule.name);
    r.rule_q3.push_back(rule(a.h_hat));
    r.rule_q4.push_back(rule(b.h_hat));
    entropy_blind = entropy_blind && r.rule_q3.back() < 0.05 && r.rule_q4.back() < 0.05;
  }
  r.softor_q3 = softor(a.h_hat, a.delta_hat);
  r.softor_q4 = softor(b.h_hat, b.delta_hat);
  r.separation = r.softor_q3 - r.softor_q4;
  // softor_q4 < 0.0975 whenever both its axes are below 0.05, hence the bound.
  r.passed = entropy_blind && r.softor_q3 >= 0.5 && r.softor_q3 >= a.delta_hat &&
             r.separation >= a.delta_hat - 0.0975;
  return r;
}

double grid_argmin(double phi, double M, double eta, double beta, double lo, double hi,
                   std::size_t points) {
  const double step = (hi - lo) / static_cast<double>(points - 1);
  double best_w = lo;
  double best = INFINITY;
  for (std::size_t i = 0; i < points; ++i) {
    const double w = lo + step * static_cast<double>(i);
    const double v = -eta * w * phi + eta * eta * beta / 2.0 * w * w * M;
    if (v < best) {
      best = v;
      best_w = w;
    }
  }
  return best_w;
}

OracleInstance random_instance(std::size_t tokens, std::uint64_t seed) {
  Rng rng(seed);
  OracleInstance inst;
  inst.eta = 1.0 + rng.uniform();
  inst.beta = 1.0 + rng.uniform();
  for (std::size_t t = 0; t < tokens; ++t) {
    inst.phi.push_back(-5.0 + 10.0 * rng.uniform());
    inst.M.push_back(0.5 + 2.5 * rng.uniform());
  }
  return inst;
}

std::vector<CheckResult> run_oracle_checks(std::size_t seeds) {
  constexpr std::size_t kTokens = 8;
  constexpr std::size_t kGrid = 10000;
  const double grid_step = 20.0 / static_cast<double>(kGrid - 1);
  std::vector<CheckResult> out;

  double worst_grid = 0.0, worst_stationary = 0.0, worst_substitution = 0.0;
  for (std::size_t s = 0; s < seeds; ++s) {
    const auto inst = random_instance(kTokens, 1000 + s);
    const auto w = oracle_weight(inst);
    for (std::size_t t = 0; t < kTokens; ++t) {
      const double g = grid_argmin(inst.phi[t], inst.M[t], inst.eta, inst.beta, -10.0, 10.0, kGrid);
      worst_grid = std::max(worst_grid, std::abs(g - w[t]));
    }
    for (double g : descent_bound_gradient(inst, w)) {
      worst_stationary = std::max(worst_stationary, std::abs(g));
    }
    const auto d = oracle_descent(inst);
    const double total = std::accumulate(d.begin(), d.end(), 0.0);
    worst_substitution = std::max(worst_substitution, std::abs(descent_bound(inst, w) - total));
  }
  out.push_back({"grid-search argmin", worst_grid <= grid_step,
                 "max |w_grid - w*| = " + fmt_double("%.3e", worst_grid) +
                     ", grid step " + fmt_double("%.3e", grid_step)});
  out.push_back({"stationarity", worst_stationary < 1e-10,
                 "max |dB/dw| at w* = " + fmt_double("%.3e", worst_stationary)});
  out.push_back({"substitution", worst_substitution < 1e-10,
                 "max |B(w*) - sum D*| = " + fmt_double("%.3e", worst_substitution)});

  const auto ordering = quadrant_ordering_demo(QuadrantArchetypes{});
  std::string detail = "w* =";
  for (double v : ordering.weights) detail += " " + fmt_double("%.4g", v);
  out.push_back({"quadrant ordering", ordering.passed(), detail});

  QuadrantArchetypes scaled;
  for (double& m : scaled.M) m *= 3.0;
  const auto scaled_report = quadrant_ordering_demo(scaled);
  bool homogeneous = scaled_report.order == ordering.order;
  for (std::size_t q = 0; q < 4; ++q) {
    homogeneous = homogeneous &&
                  std::abs(scaled_report.weights[q] - ordering.weights[q] / 3.0) < 1e-12;
  }
  out.push_back({"homogeneity in M", homogeneous, "M scaled by 3"});

  bool blind_ok = true;
  double min_margin = INFINITY;
  for (std::size_t s = 0; s < seeds; ++s) {
    Rng rng(5000 + s);
    std::vector<TokenMetrics> batch(16);
    for (auto& m : batch) {
      m.h_hat = rng.uniform();
      m.delta_hat = rng.uniform();
    }
    batch[3].h_hat = 0.05 * rng.uniform();
    batch[3].delta_hat = 0.5 + 0.5 * rng.uniform_open0();
    batch[9].h_hat = 0.05 * rng.uniform();
    batch[9].delta_hat = 0.05 * rng.uniform();
    for (std::size_t i = 0; i < batch.size(); ++i) {
      if (i != 3 && i != 9 && batch[i].h_hat < 0.05) batch[i].h_hat += 0.05;
    }
    const auto r = blind_spot_demo(batch);
    blind_ok = blind_ok && r.passed;
    min_margin = std::min(min_margin, r.separation - (r.q3_delta_hat - 0.0975));
  }
  out.push_back({"blind spot", blind_ok,
                 "min separation margin over bound = " + fmt_double("%.4f", min_margin)});
  return out;
}

}  // namespace tokimp
