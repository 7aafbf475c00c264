/* Copyright 2026 The TreeAlign Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <gmpxx.h>

#include "treealign/prm.hpp"
#include "treealign/toy_policy.hpp"
#include "treealign/tree.hpp"

namespace treealign {

struct ShapingConfig {
  double rho = 0.3;
  double gamma = 0.7;
  // Penalize only when delta > rho (the default penalizes at delta >= rho).
  bool strict = false;
  StepPooling pooling = StepPooling::kMean;
};

void validate_shaping_config(const ShapingConfig& cfg);

struct DropMoment {
  // max_j (r[j-1] - r[j]); 0 for a single score.
  double delta = 0.0;
  // j of the largest drop (first on ties); absent without a consecutive pair.
  std::optional<std::size_t> index;
  // delta > rho.
  bool triggered = false;
};

// Throws kEmptyScores on an empty sequence.
DropMoment drop_moment(std::span<const double> step_scores, double rho);

// Whether the reward penalty applies under cfg.
bool drop_penalized(std::span<const double> step_scores, const ShapingConfig& cfg);

// S_out, or gamma * S_out when the drop moment reaches rho. Throws
// kMissingOutcome when the trajectory has no outcome score.
double shaped_reward(const Trajectory& t, const PrmScoreSequence& scores, const ShapingConfig& cfg);

struct NodeAdvantage {
  int node_id = 0;
  double value = 0.0;
  double global_adv = 0.0;
  double local_adv = 0.0;
  // (GA + LA) / sqrt(leaf_count), from the exact sum.
  double weighted_adv = 0.0;
  int leaf_count = 0;
  mpq_class exact_value;
  mpq_class exact_global;
  mpq_class exact_local;
};

// Values are means of descendant leaf rewards computed in exact rational
// arithmetic (every double converts exactly). leaf_rewards is indexed by node
// id; entries for internal nodes are ignored. Throws kIncompleteRewards when
// a leaf lacks a reward.
std::vector<NodeAdvantage> tree_advantages(const ReasonTree& tree,
                                           const std::vector<std::optional<double>>& leaf_rewards);

// (R - mean) / (std + 1e-8) with population std. Throws kGroupTooSmall for
// fewer than two rewards.
std::vector<double> vanilla_grpo_advantages(std::span<const double> rewards);

struct GrpoConfig {
  double epsilon = 0.2;
  int group_size = 8;
  int steps = 200;
  double lr = 0.02;
  std::uint64_t seed = 0;
  // Gradient steps per rollout batch.
  int inner_epochs = 1;
};

void validate_grpo_config(const GrpoConfig& cfg);

struct GrpoLossReport {
  double loss = 0.0;
  int nodes = 0;
  int skipped_empty = 0;
  int clipped = 0;
};

// -(1/|nodes|) sum over non-root nodes with a non-empty slice of
// min(r A, clip(r, 1 - eps, 1 + eps) A), r = exp(logp_theta(slice) -
// logp_old(slice)). When grad is non-empty, weight * dloss/dtheta is added.
GrpoLossReport tree_grpo_loss(const ToySoftmaxPolicy& policy, const ToySoftmaxPolicy& old_policy,
                              const Task& task, const ReasonTree& tree,
                              std::span<const double> advantages, double epsilon,
                              std::span<double> grad = {}, double weight = 1.0);

// Root with one leaf child per trajectory.
ReasonTree flat_tree(const std::string& task_id, const std::vector<Trajectory>& chains);

enum class AlignMode { kVanilla, kTree, kTreeProcess, kChainProcess, kTreeAvgScore };

const char* align_mode_name(AlignMode mode);
AlignMode align_mode_from_name(const std::string& name);
std::vector<AlignMode> all_align_modes();

struct AlignConfig {
  GrpoConfig grpo;
  TreeConfig tree;
  ShapingConfig shaping;
  // Tasks rolled out per iteration, cycling through the task set.
  int batch_tasks = 8;
  double rollout_temperature = 1.0;
  // Evaluation: samples per task at rollout temperature.
  int eval_samples = 16;
  std::uint64_t eval_seed = 99;
};

struct IterationMetrics {
  int iter = 0;
  double mean_reward = 0.0;
  double mean_outcome = 0.0;
  double mean_len = 0.0;
  double drop_rate = 0.0;
  double loss = 0.0;
};

struct EvalSummary {
  double mean_outcome = 0.0;
  double accuracy = 0.0;
  double mean_len = 0.0;
  double drop_rate = 0.0;
};

struct AlignResult {
  ToySoftmaxPolicy policy;
  std::vector<IterationMetrics> log;
  EvalSummary before;
  EvalSummary after;
};

// Sampled evaluation over all tasks with a fixed seed. drop_rate uses prm
// when given.
EvalSummary evaluate_policy(const Policy& policy, const std::vector<Task>& tasks, int samples,
                            double temperature, std::uint64_t seed, const Prm* prm = nullptr,
                            const ShapingConfig& shaping = {});

using IterationCallback = std::function<void(const IterationMetrics&)>;

AlignResult align(const ToySoftmaxPolicy& init, const std::vector<Task>& tasks, const Prm& prm,
                  const AlignConfig& cfg, AlignMode mode, const IterationCallback& on_iter = {});

}  // namespace treealign
