// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <vector>

#include "test_util.hpp"
#include "tokimp/error.hpp"
#include "tokimp/selection.hpp"

using namespace tokimp;

namespace {

using Idx = std::vector<std::size_t>;

std::vector<TokenMetrics> from_scores(const std::vector<double>& softor_scores) {
  std::vector<TokenMetrics> out(softor_scores.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i].position = i;
    out[i].softor = softor_scores[i];
  }
  return out;
}

std::vector<TokenMetrics> random_metrics(testutil::Gen& g, std::size_t m) {
  std::vector<double> h(m), rev(m), fwd(m);
  for (std::size_t i = 0; i < m; ++i) {
    h[i] = g.uniform();
    rev[i] = g.uniform(0, 3);
    fwd[i] = g.uniform(0, 3);
  }
  return score_from_raw(h, rev, fwd);
}

void check_contract(const SelectionMask& mask, std::size_t m, std::size_t k) {
  CHECK(mask.total == m);
  CHECK(mask.retained.size() == k);
  CHECK(std::is_sorted(mask.retained.begin(), mask.retained.end()));
  CHECK(std::adjacent_find(mask.retained.begin(), mask.retained.end()) == mask.retained.end());
  for (auto t : mask.retained) CHECK(t < m);
}

}  // namespace

TEST_CASE("topk / bottomk: examples") {
  const std::vector<double> s{0.9, 0.1, 0.5, 0.7};
  CHECK(topk_by_score(s, 0.5).retained == Idx{0, 3});
  CHECK(bottomk_by_score(s, 0.5).retained == Idx{1, 2});
  CHECK(topk_by_score(s, 1.0).retained == Idx{0, 1, 2, 3});
  CHECK(bottomk_by_score(s, 1.0).retained == Idx{0, 1, 2, 3});
  CHECK(topk_by_score(std::vector<double>{0.5, 0.5, 0.2}, 1.0 / 3.0).retained == Idx{0});
  const std::vector<double> flat(7, 0.3);
  CHECK(topk_by_score(flat, 3.0 / 7.0).retained == Idx{0, 1, 2});
  CHECK(bottomk_by_score(flat, 3.0 / 7.0).retained == Idx{0, 1, 2});
}

TEST_CASE("budget: floor with a minimum of one") {
  CHECK(budget(0.1, 64) == 6);
  CHECK(budget(0.2, 64) == 12);
  CHECK(budget(0.29, 100) == 29);
  CHECK(budget(0.01, 10) == 1);
  CHECK(budget(1.0, 5) == 5);
  CHECK_THROWS_AS(budget(0.0, 5), Error);
  CHECK_THROWS_AS(budget(1.5, 5), Error);
  CHECK_THROWS_AS(budget(-0.2, 5), Error);
  CHECK_THROWS_AS(budget(NAN, 5), Error);
  CHECK_THROWS_AS(budget(0.5, 0), Error);
  CHECK_THROWS_AS(topk_by_score(std::vector<double>{1, 2}, 1.5), Error);
}

TEST_CASE("every strategy honours the budget contract") {
  testutil::Gen g(41);
  const Strategy all[] = {Strategy::EntropySample, Strategy::SoftorTopk, Strategy::Q3Topk,
                          Strategy::DivTopk, Strategy::SoftorBottomk, Strategy::All};
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t m = 1 + g.index(80);
    const auto metrics = random_metrics(g, m);
    const double rho = g.uniform(1e-3, 1.0);
    const std::size_t k = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(rho * m + 1e-9)));
    for (auto s : all) {
      const auto mask = select(metrics, s, rho, 1234 + trial);
      check_contract(mask, m, s == Strategy::All ? m : k);
      CHECK(mask.strategy == s);
    }
  }
}

TEST_CASE("top and bottom halves partition the batch") {
  testutil::Gen g(42);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t m = 2 * (1 + g.index(40));
    std::vector<double> s(m);
    for (auto& v : s) v = g.uniform();
    const auto metrics = from_scores(s);
    const auto top = softor_topk(metrics, 0.5);
    const auto bot = softor_bottomk(metrics, 0.5);
    std::vector<std::size_t> both;
    std::set_union(top.retained.begin(), top.retained.end(), bot.retained.begin(),
                   bot.retained.end(), std::back_inserter(both));
    Idx expected(m);
    std::iota(expected.begin(), expected.end(), 0);
    CHECK(both == expected);
    CHECK(top.retained.size() + bot.retained.size() == m);
  }
}

TEST_CASE("div_topk delegates to delta_rev") {
  testutil::Gen g(43);
  for (int trial = 0; trial < 100; ++trial) {
    const auto metrics = random_metrics(g, 30);
    std::vector<double> rev;
    for (const auto& m : metrics) rev.push_back(m.delta_rev);
    CHECK(div_topk(metrics, 0.3).retained == topk_by_score(rev, 0.3).retained);
  }
}

TEST_CASE("top-k matches a brute-force sort oracle") {
  testutil::Gen g(44);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t m = 1 + g.index(50);
    std::vector<double> s(m);
    // Coarse values force ties.
    for (auto& v : s) v = std::round(g.uniform() * 5.0) / 5.0;
    const double rho = g.uniform(0.01, 1.0);
    const std::size_t k = budget(rho, m);
    Idx oracle;
    // Selection by repeated argmax, scanning low index first.
    std::vector<bool> used(m, false);
    for (std::size_t r = 0; r < k; ++r) {
      std::size_t best = m;
      for (std::size_t i = 0; i < m; ++i) {
        if (!used[i] && (best == m || s[i] > s[best])) best = i;
      }
      used[best] = true;
      oracle.push_back(best);
    }
    std::sort(oracle.begin(), oracle.end());
    CHECK(topk_by_score(s, rho).retained == oracle);
  }
}

TEST_CASE("planted token is picked by both top-k scores") {
  const std::size_t m = 32;
  std::vector<double> h(m, 0.01), rev(m, 0.02), fwd(m, 0.02);
  for (std::size_t i = 0; i < m; ++i) {
    h[i] = 0.01 + 0.001 * static_cast<double>(i % 5);
    rev[i] = 0.02 + 0.001 * static_cast<double>(i % 3);
  }
  h.push_back(0.9);  // one diffuse, matched token sets the entropy range
  rev.push_back(0.0);
  fwd.push_back(0.0);
  h[17] = 0.01;
  rev[17] = 2.0;
  fwd[17] = 2.5;
  const auto metrics = score_from_raw(h, rev, fwd);
  CHECK(metrics[17].h_hat < 0.05);
  CHECK(metrics[17].delta_hat > 0.5);
  const double rho = 1.0 / static_cast<double>(metrics.size());
  CHECK(q3_topk(metrics, rho).retained == Idx{17});
  // The diffuse token also reaches softor 1 through h_hat = 1; position
  // breaks the tie.
  CHECK(metrics[32].softor == 1.0);
  CHECK(softor_topk(metrics, rho).retained == Idx{17});
  int hits = 0;
  for (std::uint64_t seed = 0; seed < 2000; ++seed) {
    hits += entropy_sample(metrics, rho, seed).retained == Idx{17};
  }
  // Entropy weights put at most ~0.01/1.3 of the mass on it.
  CHECK(hits < 40);
}

TEST_CASE("entropy_sample: rho = 1 keeps everything") {
  testutil::Gen g(45);
  const auto metrics = random_metrics(g, 17);
  CHECK(entropy_sample(metrics, 1.0, 9).retained.size() == 17);
}

TEST_CASE("entropy_sample: all-zero entropy falls back to uniform") {
  const std::size_t m = 8, n = 100000;
  const double rho = 0.25;
  std::vector<double> zeros(m, 0.0);
  std::vector<std::size_t> counts(m, 0);
  for (std::uint64_t seed = 0; seed < n; ++seed) {
    for (auto t : weighted_sample(zeros, rho, seed).retained) ++counts[t];
  }
  const double sigma = std::sqrt(rho * (1 - rho) / n);
  for (auto c : counts) CHECK(std::abs(static_cast<double>(c) / n - rho) < 3 * sigma);
}

TEST_CASE("entropy_sample: m=4, k=1 matches the integrated key distribution") {
  const std::vector<double> w{0.9, 0.1, 0.1, 0.1};
  // Oracle: P(key_0 is largest) = int_0^1 prod_{i>0} u^{w_i / w_0} du, by
  // midpoint quadrature.
  const std::size_t steps = 200000;
  double p0 = 0.0;
  for (std::size_t s = 0; s < steps; ++s) {
    const double u = (static_cast<double>(s) + 0.5) / steps;
    double prod = 1.0;
    for (std::size_t i = 1; i < w.size(); ++i) prod *= std::pow(u, w[i] / w[0]);
    p0 += prod / steps;
  }
  CHECK(p0 == doctest::Approx(0.75).epsilon(1e-6));

  const std::size_t n = 100000;
  std::size_t hits = 0;
  for (std::uint64_t seed = 0; seed < n; ++seed) {
    hits += weighted_sample(w, 0.25, seed).retained == Idx{0};
  }
  const double freq = static_cast<double>(hits) / n;
  CHECK(std::abs(freq - p0) < 3 * std::sqrt(p0 * (1 - p0) / n));
}

TEST_CASE("entropy_sample: deterministic per seed") {
  testutil::Gen g(46);
  const auto metrics = random_metrics(g, 50);
  for (std::uint64_t seed : {0ull, 1ull, 42ull, 0xffffffffffffffffull}) {
    CHECK(entropy_sample(metrics, 0.3, seed) == entropy_sample(metrics, 0.3, seed));
  }
  CHECK(entropy_sample(metrics, 0.3, 1).retained != entropy_sample(metrics, 0.3, 2).retained);
}

TEST_CASE("rng: pinned stream") {
  // The standard fixes the 10000th output of a default-seeded mt19937_64.
  Rng r(5489);
  for (int i = 0; i < 9999; ++i) r.next_u64();
  CHECK(r.next_u64() == 9981545732273789042ull);

  std::mt19937_64 ref(77);
  Rng a(77);
  for (int i = 0; i < 1000; ++i) {
    const auto x = ref();
    CHECK(a.uniform_open0() == static_cast<double>((x >> 11) + 1) / 9007199254740992.0);
  }
}

TEST_CASE("weighted_sample: keys follow the documented stream") {
  const std::vector<double> w{0.2, 0.9, 0.0, 0.5, 0.7};
  const std::uint64_t seed = 2024;
  std::mt19937_64 ref(seed);
  std::vector<double> keys;
  for (double wi : w) {
    const double u = static_cast<double>((ref() >> 11) + 1) / 9007199254740992.0;
    keys.push_back(wi > 0 ? std::log(u) / wi : -INFINITY);
  }
  Idx order(w.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return keys[a] > keys[b]; });
  Idx expected(order.begin(), order.begin() + 2);
  std::sort(expected.begin(), expected.end());
  const auto mask = weighted_sample(w, 0.4, seed);
  CHECK(mask.retained == expected);
  CHECK(mask.seed == seed);
  CHECK(std::find(mask.retained.begin(), mask.retained.end(), 2u) == mask.retained.end());
}

TEST_CASE("ranking cost stays within c * m log m comparisons") {
  testutil::Gen g(47);
  for (std::size_t m : {16u, 256u, 4096u, 65536u}) {
    std::vector<double> s(m);
    for (auto& v : s) v = g.uniform();
    std::size_t comparisons = 0;
    detail::rank(s, true, &comparisons);
    CHECK(static_cast<double>(comparisons) <= 4.0 * m * std::log2(static_cast<double>(m)));
  }
}

TEST_CASE("masked_loss: examples") {
  std::vector<TokenMetrics> one(1);
  one[0].delta_rev = 0.4;
  CHECK(masked_loss(one, select_all(1)) == 0.4);

  std::vector<TokenMetrics> two(2);
  two[0].delta_rev = 0.2;
  two[1].delta_rev = 0.4;
  CHECK(masked_loss(two, select_all(2)) == doctest::Approx(0.3).epsilon(1e-15));

  testutil::Gen g(48);
  const auto metrics = random_metrics(g, 25);
  double full = 0;
  for (const auto& m : metrics) full += m.delta_rev;
  CHECK(masked_loss(metrics, select_all(25)) == doctest::Approx(full / 25).epsilon(1e-14));

  SelectionMask empty;
  try {
    masked_loss(metrics, empty);
    FAIL("expected empty-selection error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::EmptySelection);
  }
}

TEST_CASE("is_estimate: examples") {
  const std::vector<double> v{1.0, 3.0, -2.0};
  const ISWeights ones({1.0, 1.0, 1.0});
  const Idx all{0, 1, 2};
  CHECK(is_estimate(v, all, ones) == doctest::Approx(2.0 / 3.0));
  CHECK(is_estimate(std::vector<double>{1, 1}, Idx{0, 1}, ISWeights({1, 1})) == 1.0);

  const ISWeights half({0.5});
  CHECK(is_estimate(std::vector<double>{2.0}, Idx{0}, half) == 4.0);
  CHECK(is_estimate(std::vector<double>{2.0}, Idx{}, half) == 0.0);

  try {
    is_estimate(std::vector<double>{1.0, 2.0}, Idx{0}, ISWeights({1.0, 0.0}));
    FAIL("expected bias error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Bias);
  }
  // Zero probability on a zero value is harmless.
  CHECK(is_estimate(std::vector<double>{1.0, 0.0}, Idx{0}, ISWeights({1.0, 0.0})) == 0.5);
  CHECK_THROWS_AS(ISWeights({1.2}), Error);
}

TEST_CASE("is_estimate: Monte Carlo mean is unbiased") {
  const std::vector<double> v{2.0};
  const ISWeights p({0.5});
  Rng rng(4242);
  const std::size_t n = 100000;
  double sum = 0, sq = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = is_estimate(v, bernoulli_include(p, rng), p);
    sum += e;
    sq += e * e;
  }
  const double mean = sum / n;
  const double sd = std::sqrt((sq / n - mean * mean) / n);
  CHECK(std::abs(mean - 2.0) < 3 * sd);
}

TEST_CASE("is_variance: examples and Monte Carlo agreement") {
  CHECK(is_variance(std::vector<double>{3.0, 4.0}, ISWeights({1.0, 1.0})) == 0.0);
  CHECK(is_variance(std::vector<double>{4.0}, ISWeights({0.5})) == 4.0);
  const ISWeights p({0.5, 0.25});
  CHECK(is_variance(std::vector<double>{1.0, 1.0}, p) == 1.0);
  CHECK_THROWS_AS(is_variance(std::vector<double>{1.0}, ISWeights({0.0})), Error);

  // Unit-norm deterministic per-token values give E||g||^2 = 1.
  const std::vector<double> v{1.0, 1.0};
  Rng rng(777);
  const std::size_t n = 1000000;
  double sum = 0, sq = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = is_estimate(v, bernoulli_include(p, rng), p);
    sum += e;
    sq += e * e;
  }
  const double mean = sum / n;
  const double var = sq / n - mean * mean;
  CHECK(std::abs(var - 1.0) / 1.0 < 0.02);
}

TEST_CASE("strategy names round-trip") {
  for (auto s : {Strategy::EntropySample, Strategy::SoftorTopk, Strategy::Q3Topk,
                 Strategy::DivTopk, Strategy::SoftorBottomk, Strategy::All}) {
    CHECK(parse_strategy(to_string(s)) == s);
  }
  CHECK_FALSE(parse_strategy("topk").has_value());
}
