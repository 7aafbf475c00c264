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

#include "treealign/mc_labeler.hpp"

#include <cmath>

namespace treealign {

const char* sample_source_name(SampleSource s) {
  switch (s) {
    case SampleSource::kMcts:
      return "MCTS";
    case SampleSource::kInjected:
      return "Injected";
    case SampleSource::kAnchor:
      return "Anchor";
  }
  return "?";
}

SampleSource sample_source_from_name(const std::string& name) {
  if (name == "MCTS") return SampleSource::kMcts;
  if (name == "Injected") return SampleSource::kInjected;
  if (name == "Anchor") return SampleSource::kAnchor;
  throw Error(ErrorCode::kInvalidArgument, "unknown sample source: " + name);
}

std::vector<int> reasoning_mask(const std::vector<int>& tokens) {
  // Markers occupy the first ids of every vocabulary layout.
  const int markers = static_cast<int>(StepKind::kAnswer) + 1;
  std::vector<int> mask;
  mask.reserve(tokens.size());
  for (int t : tokens) mask.push_back(t >= 0 && t < markers ? 0 : 1);
  return mask;
}

void check_sample(const LabeledSample& s) {
  const std::size_t n = token_count(s.trajectory);
  if (s.labels.size() != n || s.mask.size() != n) {
    throw Error(ErrorCode::kInvalidArgument, "labels/mask length differs from token count");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if ((s.labels[i] != 0 && s.labels[i] != 1) || (s.mask[i] != 0 && s.mask[i] != 1)) {
      throw Error(ErrorCode::kInvalidArgument, "labels and mask must be 0/1");
    }
  }
}

std::vector<McValue> mc_values(const ReasonTree& tree) {
  if (tree.nodes.empty()) throw Error(ErrorCode::kEmptyTree, "tree has no nodes");
  const std::vector<int> leaves = leaves_under(tree, tree.root_id);
  if (leaves.empty()) throw Error(ErrorCode::kEmptyTree, "tree has no leaves");
  std::vector<McValue> out(tree.nodes.size());
  for (const TreeNode& n : tree.nodes) {
    McValue& v = out[static_cast<std::size_t>(n.id)];
    v.node_id = n.id;
    for (int leaf : leaves_under(tree, n.id)) {
      const TreeNode& l = tree.node(leaf);
      if (l.stats.total < 1) {
        throw Error(ErrorCode::kMissingOutcome,
                    "leaf " + std::to_string(leaf) + " has no evaluated rollout");
      }
      v.successes += l.stats.successes;
      v.total += l.stats.total;
    }
    v.value = static_cast<double>(v.successes) / static_cast<double>(v.total);
  }
  return out;
}

std::vector<LabeledSample> label_tokens(const ReasonTree& tree, const std::vector<McValue>& values,
                                        double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "threshold must lie in (0, 1)");
  }
  if (values.size() != tree.nodes.size()) {
    throw Error(ErrorCode::kIncompleteValues, "values do not cover every node");
  }
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i].node_id != static_cast<int>(i) || values[i].total < 1) {
      throw Error(ErrorCode::kIncompleteValues, "missing value for node " + std::to_string(i));
    }
  }
  std::vector<LabeledSample> out;
  for (int leaf : leaves_under(tree, tree.root_id)) {
    LabeledSample s;
    s.trajectory = *tree.node(leaf).leaf_trajectory;
    s.source = SampleSource::kMcts;
    for (int id : path_to(tree, leaf)) {
      const TreeNode& n = tree.node(id);
      const int label = values[static_cast<std::size_t>(id)].value >= threshold ? 1 : 0;
      s.labels.insert(s.labels.end(), n.tokens.size(), label);
    }
    s.mask = reasoning_mask(s.trajectory.tokens());
    out.push_back(std::move(s));
  }
  return out;
}

double population_std(const std::vector<double>& xs) {
  if (xs.empty()) return 0.0;
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  return std::sqrt(var / static_cast<double>(xs.size()));
}

FilterReport variance_filter(const std::vector<CorrectnessGroup>& groups, double min_std) {
  FilterReport report;
  report.produced = groups.size();
  for (const CorrectnessGroup& g : groups) {
    GroupVerdict v;
    v.id = g.id;
    v.size = g.correctness.size();
    v.std = population_std(g.correctness);
    if (v.size < 2) {
      v.reason = "TooFew";
    } else if (v.std < min_std) {
      v.reason = "LowVariance";
    } else {
      v.retained = true;
      ++report.retained;
    }
    report.groups.push_back(std::move(v));
  }
  return report;
}

CorrectnessGroup tree_correctness(const ReasonTree& tree) {
  CorrectnessGroup g;
  g.id = tree.task_id;
  for (int leaf : leaves_under(tree, tree.root_id)) {
    const RolloutStats& s = tree.node(leaf).stats;
    g.correctness.push_back(s.total > 0 ? static_cast<double>(s.successes) / s.total : 0.0);
  }
  return g;
}

}  // namespace treealign
