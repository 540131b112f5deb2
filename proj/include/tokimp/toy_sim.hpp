// SPDX-License-Identifier: Apache-2.0
#pragma once

/**
 * @file toy_sim.hpp
 * @brief Desk-scale on-policy distillation with bigram softmax models.
 *
 * A model is a |V| x |V| logit table; row c is the next-token distribution
 * after token c. The student samples its own rollouts, the teacher scores
 * every visited context, and one training step applies plain gradient
 * descent on the masked mean reverse KL. Nothing here is a language model;
 * the planted scenario is a synthetic construction that places a known
 * set of confidently-wrong contexts among matched ones.
 */

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tokimp/dist_metrics.hpp"
#include "tokimp/selection.hpp"
#include "tokimp/taxonomy.hpp"

namespace tokimp::sim {

inline constexpr std::size_t kMinVocab = 4;
inline constexpr std::size_t kMaxVocab = 64;

class ToyModel {
 public:
  ToyModel(std::size_t vocab_size, std::vector<double> logits);
  static ToyModel zeros(std::size_t vocab_size);

  std::size_t vocab_size() const noexcept { return vocab_; }
  std::span<const double> row(std::size_t context) const;
  std::span<double> row(std::size_t context);
  ProbDist dist(std::size_t context) const { return softmax(row(context)); }
  std::span<const double> logits() const noexcept { return logits_; }

  friend bool operator==(const ToyModel&, const ToyModel&) = default;

 private:
  std::size_t vocab_;
  std::vector<double> logits_;
};

struct Rollout {
  std::size_t prompt_token = 0;
  std::vector<std::size_t> tokens;    // y_1..y_m
  std::vector<std::size_t> contexts;  // conditioning token at each position
  std::vector<TokenRecord> records;
};

/// Autoregressive sampling from the student rows, starting after `prompt`.
Rollout sample_rollout(const ToyModel& student, const ToyModel& teacher, std::size_t prompt,
                       std::size_t length, std::uint64_t seed);

/// Gradient of D_KL(softmax(z) || teacher) with respect to z:
/// g_i = s_i (ln(s_i / t_i) - D_KL).
std::vector<double> reverse_kl_grad(std::span<const double> student_logits,
                                    const ProbDist& teacher);

struct StepStats {
  double l_tip = 0.0;      // masked mean reverse KL before the update
  double full_loss = 0.0;  // unmasked mean over the same batch
  QuadrantHistogram histogram;
  std::size_t retained = 0;
  std::size_t total = 0;
};

/// Scores the pooled rollouts as one batch, selects, and applies
/// logits[c] -= lr * (1/|T|) sum_{t in T, c_t = c} grad_t.
StepStats train_step(ToyModel& student, std::span<const Rollout> rollouts, Strategy strategy,
                     double rho, double lr, std::uint64_t seed);

struct SimConfig {
  std::size_t vocab_size = 16;
  std::size_t rollout_length = 64;
  std::size_t rollouts_per_step = 4;
  double learning_rate = 10.0;
  std::size_t steps = 200;
  Strategy strategy = Strategy::All;
  double rho = 1.0;
  std::uint64_t seed = 1;
  bool planted_q3 = true;

  /// Error{Config} on any out-of-range field.
  void validate() const;
};

/// `key = value` lines; `#` starts a comment. Unknown keys are errors.
SimConfig parse_sim_config(std::string_view text);
std::string format_sim_config(const SimConfig& config);

enum class ContextKind { Filler, Planted, Diffuse };

const char* to_string(ContextKind kind) noexcept;

struct Scenario {
  ToyModel student;
  ToyModel teacher;
  std::vector<ContextKind> labels;  // ground truth per context
};

/// Contexts c with c % 4 == 1 are planted: the student puts ~0.99 on c+1
/// while the teacher puts ~0.96 on c+5. Contexts c % 8 == 3 are diffuse
/// with a mildly perturbed teacher. All others are filler where both
/// models agree on c+1. Requires vocab_size >= 8.
Scenario plant_q3_scenario(const SimConfig& config);

/// Both models drawn from N(0, 2) logits; used when planted_q3 is off.
Scenario random_scenario(const SimConfig& config);

/// Mean over all contexts of D_KL(student row || teacher row).
double context_mean_kl(const ToyModel& student, const ToyModel& teacher);

struct ExperimentRow {
  std::size_t step = 0;
  Strategy strategy = Strategy::All;
  double rho = 1.0;
  double l_tip = 0.0;
  double full_loss = 0.0;
  double eval_loss = 0.0;  // context_mean_kl before this step's update
  std::array<double, 4> fractions{};
  std::size_t retained = 0;
};

struct ExperimentResult {
  std::vector<ExperimentRow> rows;  // steps + 1 rows; the last has no update
  ToyModel final_student;

  double initial_eval_loss() const { return rows.front().eval_loss; }
  double final_eval_loss() const { return rows.back().eval_loss; }
};

ExperimentResult run_experiment(const SimConfig& config);

/// Columns: step,strategy,rho,l_tip,full_loss,eval_loss,q1,q2,q3,q4,retained
void write_experiment_csv(std::ostream& out, const ExperimentResult& result);

}  // namespace tokimp::sim
