// SPDX-License-Identifier: Apache-2.0
#include "tokimp/toy_sim.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <sstream>

#include "tokimp/error.hpp"
#include "tokimp/rng.hpp"
#include "tokimp/scoring.hpp"

namespace tokimp::sim {

namespace {

// Box-Muller on the portable uniform stream.
double normal(Rng& rng, double stddev) {
  const double u1 = rng.uniform_open0();
  const double u2 = rng.uniform();
  return stddev * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const auto* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) {
    fail(ErrorKind::Config, "bad value for '" + key + "': " + value);
  }
  return out;
}

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

ToyModel::ToyModel(std::size_t vocab_size, std::vector<double> logits)
    : vocab_(vocab_size), logits_(std::move(logits)) {
  if (vocab_ < kMinVocab || vocab_ > kMaxVocab) {
    fail(ErrorKind::Config, "toy vocab size must lie in [4, 64], got " + std::to_string(vocab_));
  }
  if (logits_.size() != vocab_ * vocab_) fail(ErrorKind::Dimension, "logit table is not |V|x|V|");
  for (double z : logits_) {
    if (!std::isfinite(z)) fail(ErrorKind::InvalidInput, "non-finite logit in toy model");
  }
}

ToyModel ToyModel::zeros(std::size_t vocab_size) {
  return ToyModel(vocab_size, std::vector<double>(vocab_size * vocab_size, 0.0));
}

std::span<const double> ToyModel::row(std::size_t context) const {
  return std::span<const double>(logits_).subspan(context * vocab_, vocab_);
}

std::span<double> ToyModel::row(std::size_t context) {
  return std::span<double>(logits_).subspan(context * vocab_, vocab_);
}

Rollout sample_rollout(const ToyModel& student, const ToyModel& teacher, std::size_t prompt,
                       std::size_t length, std::uint64_t seed) {
  if (student.vocab_size() != teacher.vocab_size()) {
    fail(ErrorKind::Dimension, "student and teacher vocab sizes differ");
  }
  if (length == 0) fail(ErrorKind::InvalidInput, "rollout length must be positive");
  if (prompt >= student.vocab_size()) fail(ErrorKind::InvalidInput, "prompt token out of range");
  Rng rng(seed);
  Rollout r;
  r.prompt_token = prompt;
  std::size_t context = prompt;
  for (std::size_t t = 0; t < length; ++t) {
    auto s = student.dist(context);
    const std::size_t token = rng.categorical(s.probs());
    r.records.push_back({t, std::move(s), teacher.dist(context), token, std::nullopt});
    r.contexts.push_back(context);
    r.tokens.push_back(token);
    context = token;
  }
  return r;
}

std::vector<double> reverse_kl_grad(std::span<const double> student_logits,
                                    const ProbDist& teacher) {
  if (student_logits.size() != teacher.vocab_size()) {
    fail(ErrorKind::Dimension, "logit/teacher dimension mismatch");
  }
  const auto s = softmax(student_logits);
  const double kl = reverse_kl(s, teacher);
  std::vector<double> g(s.vocab_size(), 0.0);
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (s[i] > 0.0) g[i] = s[i] * (std::log(s[i] / std::max(teacher[i], kKlFloor)) - kl);
  }
  return g;
}

StepStats train_step(ToyModel& student, std::span<const Rollout> rollouts, Strategy strategy,
                     double rho, double lr, std::uint64_t seed) {
  if (!std::isfinite(lr) || lr < 0.0) fail(ErrorKind::Config, "learning rate must be >= 0");
  std::vector<TokenRecord> batch;
  std::vector<std::size_t> contexts;
  for (const auto& r : rollouts) {
    batch.insert(batch.end(), r.records.begin(), r.records.end());
    contexts.insert(contexts.end(), r.contexts.begin(), r.contexts.end());
  }
  auto metrics = score_batch(batch);
  StepStats stats;
  stats.histogram = quadrant_histogram(metrics, QuadrantThresholds::batch_median());
  const auto mask = strategy == Strategy::All ? select_all(metrics.size())
                                              : select(metrics, strategy, rho, seed);
  stats.l_tip = masked_loss(metrics, mask);
  stats.full_loss = masked_loss(metrics, select_all(metrics.size()));
  stats.retained = mask.retained.size();
  stats.total = metrics.size();
  if (lr == 0.0) return stats;

  const std::size_t V = student.vocab_size();
  std::vector<double> accum(V * V, 0.0);
  const double scale = 1.0 / static_cast<double>(mask.retained.size());
  for (std::size_t t : mask.retained) {
    const std::size_t c = contexts[t];
    const auto g = reverse_kl_grad(student.row(c), batch[t].teacher);
    for (std::size_t i = 0; i < V; ++i) accum[c * V + i] += scale * g[i];
  }
  for (std::size_t c = 0; c < V; ++c) {
    auto row = student.row(c);
    for (std::size_t i = 0; i < V; ++i) row[i] -= lr * accum[c * V + i];
  }
  return stats;
}

void SimConfig::validate() const {
  if (vocab_size < kMinVocab || vocab_size > kMaxVocab) {
    fail(ErrorKind::Config, "vocab_size must lie in [4, 64]");
  }
  if (planted_q3 && vocab_size < 8) fail(ErrorKind::Config, "planted scenario needs vocab_size >= 8");
  if (rollout_length == 0) fail(ErrorKind::Config, "rollout_length must be positive");
  if (rollouts_per_step == 0) fail(ErrorKind::Config, "rollouts_per_step must be positive");
  if (steps == 0) fail(ErrorKind::Config, "steps must be positive");
  if (!std::isfinite(learning_rate) || learning_rate <= 0.0) {
    fail(ErrorKind::Config, "learning_rate must be positive");
  }
  if (!std::isfinite(rho) || rho <= 0.0 || rho > 1.0) fail(ErrorKind::Config, "rho must lie in (0, 1]");
}

SimConfig parse_sim_config(std::string_view text) {
  SimConfig c;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      fail(ErrorKind::Config, "line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    if (key == "vocab_size") {
      c.vocab_size = parse_number<std::size_t>(key, value);
    } else if (key == "rollout_length") {
      c.rollout_length = parse_number<std::size_t>(key, value);
    } else if (key == "rollouts_per_step") {
      c.rollouts_per_step = parse_number<std::size_t>(key, value);
    } else if (key == "learning_rate") {
      c.learning_rate = parse_number<double>(key, value);
    } else if (key == "steps") {
      c.steps = parse_number<std::size_t>(key, value);
    } else if (key == "strategy") {
      const auto s = parse_strategy(value);
      if (!s) fail(ErrorKind::Config, "unknown strategy '" + value + "'");
      c.strategy = *s;
    } else if (key == "rho") {
      c.rho = parse_number<double>(key, value);
    } else if (key == "seed") {
      c.seed = parse_number<std::uint64_t>(key, value);
    } else if (key == "planted_q3") {
      if (value == "true" || value == "1") {
        c.planted_q3 = true;
      } else if (value == "false" || value == "0") {
        c.planted_q3 = false;
      } else {
        fail(ErrorKind::Config, "planted_q3 must be true or false");
      }
    } else {
      fail(ErrorKind::Config, "line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
  }
  c.validate();
  return c;
}

std::string format_sim_config(const SimConfig& c) {
  std::ostringstream out;
  out << "vocab_size = " << c.vocab_size << "\n"
      << "rollout_length = " << c.rollout_length << "\n"
      << "rollouts_per_step = " << c.rollouts_per_step << "\n"
      << "learning_rate = " << fmt17(c.learning_rate) << "\n"
      << "steps = " << c.steps << "\n"
      << "strategy = " << to_string(c.strategy) << "\n"
      << "rho = " << fmt17(c.rho) << "\n"
      << "seed = " << c.seed << "\n"
      << "planted_q3 = " << (c.planted_q3 ? "true" : "false") << "\n";
  return out.str();
}

const char* to_string(ContextKind kind) noexcept {
  switch (kind) {
    case ContextKind::Filler: return "filler";
    case ContextKind::Planted: return "planted";
    case ContextKind::Diffuse: return "diffuse";
  }
  return "?";
}

Scenario plant_q3_scenario(const SimConfig& config) {
  const std::size_t V = config.vocab_size;
  if (V < 8 || V > kMaxVocab) fail(ErrorKind::Config, "planted scenario needs vocab_size in [8, 64]");
  Rng rng(mix_seed(config.seed, 0x5ce7a210));
  auto student = ToyModel::zeros(V);
  auto teacher = ToyModel::zeros(V);
  std::vector<ContextKind> labels(V, ContextKind::Filler);
  // Keeps planted student entropy well under 0.1 of ln|V| across vocab sizes.
  const double sharp = std::max(5.0, 7.0 + std::log(static_cast<double>(V) / 16.0));
  for (std::size_t c = 0; c < V; ++c) {
    const std::size_t next = (c + 1) % V;
    auto s = student.row(c);
    auto t = teacher.row(c);
    if (c % 4 == 1) {
      labels[c] = ContextKind::Planted;
      const std::size_t preferred = (c + 5) % V;
      s[next] = sharp;
      for (double& z : t) z = -3.0;
      t[preferred] = 6.0;
      t[next] = -2.0;
      for (double& z : s) z += normal(rng, 0.05);
    } else if (c % 8 == 3) {
      labels[c] = ContextKind::Diffuse;
      for (std::size_t i = 0; i < V; ++i) {
        s[i] = normal(rng, 0.5);
        t[i] = s[i] + normal(rng, 0.3);
      }
    } else {
      t[next] = 6.0;
      for (std::size_t i = 0; i < V; ++i) s[i] = t[i] + normal(rng, 0.05);
    }
  }
  return {std::move(student), std::move(teacher), std::move(labels)};
}

Scenario random_scenario(const SimConfig& config) {
  const std::size_t V = config.vocab_size;
  Rng rng(mix_seed(config.seed, 0x7a2d0));
  std::vector<double> s(V * V), t(V * V);
  for (double& z : s) z = normal(rng, 2.0);
  for (double& z : t) z = normal(rng, 2.0);
  return {ToyModel(V, std::move(s)), ToyModel(V, std::move(t)),
          std::vector<ContextKind>(V, ContextKind::Diffuse)};
}

double context_mean_kl(const ToyModel& student, const ToyModel& teacher) {
  double sum = 0.0;
  for (std::size_t c = 0; c < student.vocab_size(); ++c) {
    sum += reverse_kl(student.dist(c), teacher.dist(c));
  }
  return sum / static_cast<double>(student.vocab_size());
}

ExperimentResult run_experiment(const SimConfig& config) {
  config.validate();
  auto scenario = config.planted_q3 ? plant_q3_scenario(config) : random_scenario(config);
  ToyModel student = std::move(scenario.student);
  const ToyModel& teacher = scenario.teacher;
  const std::size_t V = config.vocab_size;

  ExperimentResult result{{}, student};
  for (std::size_t step = 0; step <= config.steps; ++step) {
    Rng step_rng(mix_seed(config.seed, step));
    std::vector<Rollout> rollouts;
    for (std::size_t r = 0; r < config.rollouts_per_step; ++r) {
      const std::size_t prompt = step_rng.next_u64() % V;
      rollouts.push_back(
          sample_rollout(student, teacher, prompt, config.rollout_length, step_rng.next_u64()));
    }
    ExperimentRow row;
    row.step = step;
    row.strategy = config.strategy;
    row.rho = config.strategy == Strategy::All ? 1.0 : config.rho;
    row.eval_loss = context_mean_kl(student, teacher);
    const double lr = step < config.steps ? config.learning_rate : 0.0;
    const auto stats = train_step(student, rollouts, config.strategy, row.rho, lr,
                                  step_rng.next_u64());
    row.l_tip = stats.l_tip;
    row.full_loss = stats.full_loss;
    row.fractions = stats.histogram.fractions;
    row.retained = stats.retained;
    result.rows.push_back(row);
  }
  result.final_student = std::move(student);
  return result;
}

void write_experiment_csv(std::ostream& out, const ExperimentResult& result) {
  out << "step,strategy,rho,l_tip,full_loss,eval_loss,q1,q2,q3,q4,retained\n";
  for (const auto& r : result.rows) {
    out << r.step << ',' << to_string(r.strategy) << ',' << fmt17(r.rho) << ','
        << fmt17(r.l_tip) << ',' << fmt17(r.full_loss) << ',' << fmt17(r.eval_loss);
    for (double f : r.fractions) out << ',' << fmt17(f);
    out << ',' << r.retained << '\n';
  }
}

}  // namespace tokimp::sim
