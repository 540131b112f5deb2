// SPDX-License-Identifier: Apache-2.0
//
// Acceptance gate. Runs each primary criterion at its stated tolerance and
// runtime budget, prints one PASS/FAIL line per criterion, and exits
// non-zero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "tokimp/dist_metrics.hpp"
#include "tokimp/error.hpp"
#include "tokimp/oracle_theory.hpp"
#include "tokimp/record_io.hpp"
#include "tokimp/report.hpp"
#include "tokimp/scoring.hpp"
#include "tokimp/selection.hpp"
#include "tokimp/taxonomy.hpp"
#include "tokimp/toy_sim.hpp"

using namespace tokimp;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool passed = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      passed = false;
      if (!detail.empty()) detail += "; ";
      detail += what;
    }
  }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// Independent test-side generator.
struct Gen {
  std::mt19937_64 eng;
  explicit Gen(std::uint64_t s) : eng(s) {}
  double uniform(double lo = 0, double hi = 1) {
    return std::uniform_real_distribution<double>(lo, hi)(eng);
  }
  std::vector<double> probs(std::size_t n, double sharp = 3.0) {
    std::vector<double> p(n);
    double sum = 0;
    for (auto& v : p) sum += (v = std::exp(sharp * uniform(-1, 1)));
    for (auto& v : p) v /= sum;
    return p;
  }
};

double kl_sum(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] > 0) s += a[i] * std::log(a[i] / std::max(b[i], 1e-12));
  }
  return s;
}

// 1: metric exactness.
Outcome metric_exactness() {
  Outcome o;
  for (std::size_t v = 2; v <= 64; ++v) {
    o.require(normalized_entropy(ProbDist::uniform(v)) == 1.0, "uniform h != 1 at V=" + std::to_string(v));
    o.require(normalized_entropy(ProbDist::one_hot(v, v / 2)) == 0.0, "one-hot h != 0");
  }
  Gen g(101);
  double worst_same = 0, worst_gibbs = 0;
  for (int i = 0; i < 10000; ++i) {
    const std::size_t n = 2 + static_cast<std::size_t>(g.uniform() * 30);
    const auto p = g.probs(n), q = g.probs(n);
    const ProbDist P(p), Q(q);
    worst_same = std::max({worst_same, std::abs(reverse_kl(P, P)), std::abs(forward_kl(P, P))});
    worst_gibbs = std::min({worst_gibbs, reverse_kl(P, Q), forward_kl(P, Q)});
    if (i < 1000) {
      o.require(std::abs(reverse_kl(P, Q) - kl_sum(p, q)) <= 1e-12 * std::max(1.0, kl_sum(p, q)),
                "reverse KL disagrees with term-by-term sum");
    }
  }
  o.require(worst_same <= 1e-9, "identical-dist KL " + fmt("%.3g", worst_same));
  o.require(worst_gibbs >= 0.0, "negative KL " + fmt("%.3g", worst_gibbs));
  if (o.passed) o.detail = "max |KL(p,p)| = " + fmt("%.2g", worst_same) + ", 10^4 Gibbs pairs";
  return o;
}

// 2: soft-OR identities and the blind spot.
Outcome softor_identities() {
  Outcome o;
  Gen g(102);
  double worst = 0;
  for (int i = 0; i < 10000; ++i) {
    const double h = g.uniform(), d = g.uniform();
    worst = std::max(worst, std::abs(softor(h, d) - (1 - (1 - h) * (1 - d))));
    const double h2 = std::min(1.0, h + g.uniform(0, 0.2)), d2 = std::min(1.0, d + g.uniform(0, 0.2));
    o.require(softor(h2, d) >= softor(h, d) && softor(h, d2) >= softor(h, d), "not monotone");
  }
  o.require(worst <= 1e-12, "forms differ by " + fmt("%.3g", worst));

  const auto rules = entropy_rule_family();
  double min_planted = 1.0, max_rule = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const double h = g.uniform(0, 0.05);
    const double d = g.uniform(0.5 + 1e-12, 1.0);
    min_planted = std::min(min_planted, softor(h, d));
    for (const auto& r : rules) max_rule = std::max(max_rule, r(h));
  }
  o.require(min_planted >= 0.5, "planted softor " + fmt("%.4f", min_planted));
  o.require(max_rule < 0.05, "entropy rule score " + fmt("%.4f", max_rule));
  if (o.passed) {
    o.detail = "form gap " + fmt("%.1e", worst) + ", min planted softor " + fmt("%.3f", min_planted) +
               ", max entropy-rule score " + fmt("%.4e", max_rule);
  }
  return o;
}

// 3: oracle weights against grid search.
Outcome oracle_theory() {
  Outcome o;
  Gen g(103);
  const std::size_t points = 10000;
  const double step = 20.0 / (points - 1);
  double worst_grid = 0, worst_stat = 0, worst_sub = 0;
  for (int trial = 0; trial < 100; ++trial) {
    OracleInstance inst;
    inst.eta = g.uniform(0.1, 2.0);
    inst.beta = g.uniform(0.5, 4.0);
    const std::size_t n = 4;
    for (std::size_t t = 0; t < n; ++t) {
      const double M = g.uniform(0.1, 3.0);
      inst.M.push_back(M);
      inst.phi.push_back(g.uniform(-9.5, 9.5) * inst.eta * inst.beta * M);
    }
    const auto w = oracle_weight(inst);
    for (std::size_t t = 0; t < n; ++t) {
      double best = INFINITY, arg = 0;
      for (std::size_t i = 0; i < points; ++i) {
        const double x = -10.0 + step * static_cast<double>(i);
        const double v = -inst.eta * x * inst.phi[t] +
                         0.5 * inst.eta * inst.eta * inst.beta * x * x * inst.M[t];
        if (v < best) {
          best = v;
          arg = x;
        }
      }
      worst_grid = std::max(worst_grid, std::abs(arg - w[t]));
    }
    for (double r : descent_bound_gradient(inst, w)) worst_stat = std::max(worst_stat, std::abs(r));
    const auto d = oracle_descent(inst);
    worst_sub = std::max(worst_sub, std::abs(descent_bound(inst, w) -
                                             std::accumulate(d.begin(), d.end(), 0.0)));
  }
  o.require(worst_grid <= step, "grid gap " + fmt("%.3g", worst_grid));
  o.require(worst_stat < 1e-10, "stationarity " + fmt("%.3g", worst_stat));
  o.require(worst_sub < 1e-10, "substitution " + fmt("%.3g", worst_sub));
  const auto rep = quadrant_ordering_demo(QuadrantArchetypes{});
  o.require(rep.strictly_ordered, "archetypes not ordered Q1>Q2>Q3>Q4");
  if (o.passed) {
    o.detail = "grid gap " + fmt("%.2e", worst_grid) + " (step " + fmt("%.2e", step) +
               "), stationarity " + fmt("%.1e", worst_stat) + ", w* = " +
               fmt("%.3f", rep.weights[0]) + " > " + fmt("%.3f", rep.weights[1]) + " > " +
               fmt("%.3f", rep.weights[2]) + " > " + fmt("%.4f", rep.weights[3]);
  }
  return o;
}

// 4: importance-sampling estimator.
Outcome is_estimator() {
  Outcome o;
  {
    const std::vector<double> v{2.0, -1.0, 0.5, 3.0, 0.0};
    const ISWeights p({0.5, 0.9, 0.2, 0.7, 0.3});
    const double full = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
    Rng rng(404);
    const std::size_t n = 100000;
    double sum = 0, sq = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double e = is_estimate(v, bernoulli_include(p, rng), p);
      sum += e;
      sq += e * e;
    }
    const double mean = sum / n;
    const double se = std::sqrt((sq / n - mean * mean) / n);
    o.require(std::abs(mean - full) < 3 * se, "MC mean " + fmt("%.5f", mean) + " vs " + fmt("%.5f", full));
    o.detail = "mean " + fmt("%.4f", mean) + " vs " + fmt("%.4f", full) + " (3se " + fmt("%.4f", 3 * se) + ")";
  }
  {
    const std::vector<double> v{1.0, 1.0};
    const ISWeights p({0.5, 0.25});
    const double closed = is_variance(std::vector<double>{1.0, 1.0}, p);
    Rng rng(405);
    const std::size_t n = 1000000;
    double sum = 0, sq = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double e = is_estimate(v, bernoulli_include(p, rng), p);
      sum += e;
      sq += e * e;
    }
    const double mean = sum / n;
    const double var = sq / n - mean * mean;
    const double rel = std::abs(var - closed) / closed;
    o.require(rel < 0.02, "variance off by " + fmt("%.3f", rel));
    o.detail += ", variance " + fmt("%.4f", var) + " vs " + fmt("%.4f", closed);
  }
  return o;
}

// 5: selection contracts.
Outcome selection_contracts() {
  Outcome o;
  Gen g(105);
  const Strategy all[] = {Strategy::EntropySample, Strategy::SoftorTopk, Strategy::Q3Topk,
                          Strategy::DivTopk, Strategy::SoftorBottomk, Strategy::All};
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t m = 1 + static_cast<std::size_t>(g.uniform() * 100);
    std::vector<double> h(m), rev(m), fwd(m);
    for (std::size_t i = 0; i < m; ++i) {
      // Coarse values exercise ties.
      h[i] = std::round(g.uniform() * 8) / 8;
      rev[i] = std::round(g.uniform() * 8) / 4;
      fwd[i] = std::round(g.uniform() * 8) / 4;
    }
    const auto metrics = score_from_raw(h, rev, fwd);
    const double rho = g.uniform(0.001, 1.0);
    const std::size_t k = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(rho * m + 1e-9)));
    for (auto s : all) {
      const auto a = select(metrics, s, rho, 31 * trial);
      const auto b = select(metrics, s, rho, 31 * trial);
      const std::size_t want = s == Strategy::All ? m : k;
      bool ok = a.retained.size() == want && a == b;
      for (std::size_t i = 0; i < a.retained.size(); ++i) {
        ok = ok && a.retained[i] < m && (i == 0 || a.retained[i] > a.retained[i - 1]);
      }
      o.require(ok, std::string("budget/determinism broken for ") + to_string(s));
    }
  }
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t m = 2 * (1 + static_cast<std::size_t>(g.uniform() * 40));
    std::vector<double> s(m);
    for (auto& v : s) v = g.uniform();
    const auto top = topk_by_score(s, 0.5), bot = bottomk_by_score(s, 0.5);
    std::vector<int> hits(m, 0);
    for (auto t : top.retained) ++hits[t];
    for (auto t : bot.retained) ++hits[t];
    o.require(std::all_of(hits.begin(), hits.end(), [](int x) { return x == 1; }), "top/bottom not a partition");
  }
  // Exponential-race oracle for the key method: P(index 0 first) = w0 / sum w.
  const std::vector<double> w{0.9, 0.1, 0.1, 0.1};
  const double p0 = 0.9 / 1.2;
  const std::size_t n = 100000;
  std::size_t hits = 0;
  for (std::uint64_t seed = 0; seed < n; ++seed) hits += weighted_sample(w, 0.25, seed).retained.front() == 0;
  const double freq = static_cast<double>(hits) / n;
  const double sigma = std::sqrt(p0 * (1 - p0) / n);
  o.require(std::abs(freq - p0) < 3 * sigma, "entropy-sample frequency " + fmt("%.4f", freq));
  if (o.passed) o.detail = "m=4,k=1 frequency " + fmt("%.4f", freq) + " vs 0.75 (3 sigma " + fmt("%.4f", 3 * sigma) + ")";
  return o;
}

// 6: simulator gradients.
Outcome simulator_gradients() {
  Outcome o;
  Gen g(106);
  const double h = 1e-5;
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> z(8);
    for (auto& x : z) x = g.uniform(-2, 2);
    const ProbDist t(g.probs(8));
    const auto grad = sim::reverse_kl_grad(z, t);
    for (std::size_t i = 0; i < 8; ++i) {
      auto up = z, down = z;
      up[i] += h;
      down[i] -= h;
      const double fd = (reverse_kl(softmax(up), t) - reverse_kl(softmax(down), t)) / (2 * h);
      worst = std::max(worst, std::abs(grad[i] - fd) / std::max(std::abs(fd), 1e-8));
    }
  }
  o.require(worst < 1e-4, "relative error " + fmt("%.3g", worst));
  if (o.passed) o.detail = "max relative error " + fmt("%.2e", worst);
  return o;
}

// 7: directional analogue on the planted scenario.
Outcome directional() {
  Outcome o;
  struct Arm {
    Strategy s;
    double rho;
    double final_loss = 0, reduction = 0;
  };
  std::vector<Arm> arms{{Strategy::All, 1.0},
                        {Strategy::Q3Topk, 0.1},
                        {Strategy::SoftorBottomk, 0.5},
                        {Strategy::SoftorTopk, 0.2},
                        {Strategy::EntropySample, 0.2}};
  const int seeds = 20;
  for (auto& arm : arms) {
    for (int seed = 1; seed <= seeds; ++seed) {
      sim::SimConfig cfg;
      cfg.vocab_size = 16;
      cfg.rollout_length = 64;
      cfg.steps = 200;
      cfg.strategy = arm.s;
      cfg.rho = arm.rho;
      cfg.seed = static_cast<std::uint64_t>(seed);
      const auto res = sim::run_experiment(cfg);
      arm.final_loss += res.final_eval_loss() / seeds;
      arm.reduction += (res.initial_eval_loss() - res.final_eval_loss()) / seeds;
    }
  }
  const double full = arms[0].reduction;
  const double q3_share = arms[1].reduction / full;
  const double bottom_share = arms[2].reduction / full;
  o.require(q3_share >= 0.90, "q3-topk(0.1) share " + fmt("%.3f", q3_share));
  o.require(bottom_share < 0.60, "softor-bottomk(0.5) share " + fmt("%.3f", bottom_share));
  o.require(arms[3].final_loss <= arms[4].final_loss,
            "softor-topk(0.2) final " + fmt("%.4f", arms[3].final_loss) + " > entropy-sample(0.2) " +
                fmt("%.4f", arms[4].final_loss));
  std::string d = "q3-topk(0.1) " + fmt("%.1f", 100 * q3_share) + "% of full, softor-bottomk(0.5) " +
                  fmt("%.1f", 100 * bottom_share) + "%, final loss softor-topk(0.2) " +
                  fmt("%.4f", arms[3].final_loss) + " vs entropy-sample(0.2) " + fmt("%.4f", arms[4].final_loss);
  o.detail = o.passed ? d : o.detail + " | " + d;
  return o;
}

// 8: worked-example fixtures.
Outcome worked_examples() {
  Outcome o;
  // Reported student entropy and forward KL for Examples 1..5.
  const std::vector<double> h{0.02, 1.82, 0.40, 0.12, 1.38};
  const std::vector<double> fwd{5.27, 5.31, 3.54, 5.58, 4.27};
  const Quadrant expected[] = {Quadrant::Q3, Quadrant::Q1, Quadrant::Q3, Quadrant::Q3, Quadrant::Q1};
  auto metrics = score_from_raw(h, fwd, fwd);
  const auto th = classify_batch(metrics, QuadrantThresholds::batch_median());
  std::string labels;
  for (std::size_t i = 0; i < metrics.size(); ++i) {
    const auto got = *metrics[i].quadrant;
    labels += std::string(i ? " " : "") + "Ex" + std::to_string(i + 1) + "=" + to_string(got);
    if (got != expected[i]) {
      o.require(false, "Ex" + std::to_string(i + 1) + " is " + to_string(got) + " (h_hat " +
                           fmt("%.3f", metrics[i].h_hat) + ", delta_hat " +
                           fmt("%.3f", metrics[i].delta_hat) + "), expected " + to_string(expected[i]));
    }
  }
  // Consistency fixture: back-solve h_hat from the reported 5.24.
  const double h_hat = 1.0 - 5.24 / 5.27;
  const double q3 = q3_score(5.27, h_hat);
  o.require(std::abs(q3 - 5.24) <= 0.01, "q3_score " + fmt("%.4f", q3));
  const std::string d = labels + "; medians tau_h " + fmt("%.3f", th.tau_h) + ", tau_d " +
                        fmt("%.3f", th.tau_d) + "; Ex1 q3_score " + fmt("%.3f", q3);
  o.detail = o.passed ? d : o.detail + " | " + d;
  return o;
}

// 9: I/O round trip, golden report, CLI-path determinism.
std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome io_contracts() {
  Outcome o;
  Gen g(109);
  std::vector<TokenRecord> recs;
  for (std::size_t i = 0; i < 1000; ++i) {
    const double sharp = i % 4 == 0 ? 15.0 : 2.5;
    recs.push_back({i, ProbDist(g.probs(11, sharp)), ProbDist(g.probs(11, sharp)), i % 11,
                    "r" + std::to_string(i / 50)});
  }
  std::stringstream buf;
  io::write_records(buf, recs);
  const auto back = io::parse_records(buf);
  bool same = back.size() == recs.size();
  for (std::size_t i = 0; same && i < recs.size(); ++i) {
    same = back[i].student == recs[i].student && back[i].teacher == recs[i].teacher &&
           back[i].rollout_id == recs[i].rollout_id;
  }
  o.require(same, "round trip not bit-identical");

  const fs::path fixtures(TOKIMP_FIXTURE_DIR);
  std::ifstream in(fixtures / "records12.jsonl");
  const auto fx = io::parse_records(in);
  auto run_report = [&](const fs::path& dir) {
    std::vector<io::BatchAnalysis> b{io::analyze_batch(fx, QuadrantThresholds::batch_median(), "0")};
    for (auto s : {Strategy::SoftorTopk, Strategy::Q3Topk, Strategy::DivTopk,
                   Strategy::SoftorBottomk, Strategy::EntropySample}) {
      b[0].masks.push_back(select(b[0].metrics, s, 0.25, 7));
    }
    io::emit_report(b, dir.string());
  };
  const fs::path tmp = fs::temp_directory_path() / "tokimp_acceptance_io";
  fs::remove_all(tmp);
  run_report(tmp / "a");
  run_report(tmp / "b");
  o.require(slurp(tmp / "a" / "metrics.csv") == slurp(fixtures / "records12.metrics.csv"),
            "metrics.csv differs from golden");
  o.require(slurp(tmp / "a" / "summary.json") == slurp(fixtures / "records12.summary.json"),
            "summary.json differs from golden");
  o.require(slurp(tmp / "a" / "metrics.csv") == slurp(tmp / "b" / "metrics.csv"),
            "repeated report differs");
  fs::remove_all(tmp);
  if (o.passed) o.detail = "1000-record round trip exact, golden report byte-identical";
  return o;
}

struct Criterion {
  int id;
  const char* name;
  double budget_seconds;
  std::function<Outcome()> run;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "metric exactness", 5, metric_exactness},
      {2, "soft-OR identities and blind spot", 5, softor_identities},
      {3, "oracle weights vs grid search", 30, oracle_theory},
      {4, "importance-sampling estimator", 60, is_estimator},
      {5, "selection contracts", 60, selection_contracts},
      {6, "simulator gradients", 10, simulator_gradients},
      {7, "planted-scenario directional analogue", 300, directional},
      {8, "worked-example fixtures", 5, worked_examples},
      {9, "record I/O and reports", 10, io_contracts},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.passed = false;
      o.detail = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (secs > c.budget_seconds) {
      o.passed = false;
      o.detail += " | over budget";
    }
    failures += !o.passed;
    std::printf("[%s] criterion %d: %s (%.2fs) - %s\n", o.passed ? "PASS" : "FAIL", c.id, c.name,
                secs, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures,
              criteria.size());
  return failures == 0 ? 0 : 1;
}
