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
#include <optional>
#include <string>
#include <vector>

#include "treealign/policy.hpp"
#include "treealign/toy_env.hpp"

namespace treealign {

struct TreeConfig {
  // Top-N highest-entropy positions branched per round.
  int branch_n = 3;
  // Rollouts launched from each branch point.
  int rollouts_t = 9;
  // Branching rounds after the trunk rollout.
  int rounds_k = 4;
  double temperature = 1.2;
  double top_p = 1.0;
  std::uint64_t seed = 0;
  // Positions before this index are never branched.
  int min_prefix_tokens = 1;
  // Re-score entropies on every current trajectory each round; when false
  // only the trunk is scored.
  bool rescore_each_round = true;
  EntropyPooling pooling = EntropyPooling::kPerToken;
  int max_steps = 12;
};

void validate_tree_config(const TreeConfig& cfg);

struct RolloutStats {
  int successes = 0;
  int total = 0;
  friend bool operator==(const RolloutStats&, const RolloutStats&) = default;
};

// A node owns the token slice [begin, begin + tokens.size()) of every path
// through it. The root owns the empty prompt slice.
struct TreeNode {
  int id = 0;
  std::optional<int> parent;
  std::size_t begin = 0;
  std::vector<int> tokens;
  std::vector<double> logprobs;
  std::vector<int> children;
  std::optional<Trajectory> leaf_trajectory;
  std::optional<double> value;
  RolloutStats stats;

  bool is_leaf() const { return children.empty(); }
  std::size_t end() const { return begin + tokens.size(); }
};

struct BuildStats {
  // Tokens sampled by the policy across the trunk and every rollout.
  std::size_t generated_tokens = 0;
  int branch_points = 0;
  int rounds_run = 0;
};

// Nodes are stored densely: nodes[i].id == i.
struct ReasonTree {
  std::string task_id;
  std::vector<TreeNode> nodes;
  int root_id = 0;
  TreeConfig config;
  BuildStats stats;

  // Throws kNotFound for unknown ids.
  const TreeNode& node(int id) const;
};

// Entropy-guided construction: a trunk rollout, then rounds_k rounds each
// branching the branch_n highest-entropy unbranched positions (ties: earlier
// position, then lower leaf id) with rollouts_t rollouts apiece. Leaves get
// their outcome score and a 0/1 correctness indicator in stats.
ReasonTree build_tree(const Policy& policy, const Task& task, const TreeConfig& cfg);

// Leaves of the subtree at node_id, in depth-first child order.
std::vector<int> leaves_under(const ReasonTree& tree, int node_id);

// Root-to-node id path, root first.
std::vector<int> path_to(const ReasonTree& tree, int node_id);

// Tokens of every slice from the root through node_id.
std::vector<int> path_tokens(const ReasonTree& tree, int node_id);

// One trajectory per leaf, depth-first.
std::vector<Trajectory> flatten_paths(const ReasonTree& tree);

// Structural invariants; returns human-readable problems (empty when sound).
std::vector<std::string> check_tree(const ReasonTree& tree);

// Sum of slice lengths over all nodes.
std::size_t total_slice_tokens(const ReasonTree& tree);

}  // namespace treealign
