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

#include <map>
#include <string>
#include <vector>

#include "treealign/tree.hpp"

namespace treealign {

struct McValue {
  int node_id = 0;
  double value = 0.0;
  int successes = 0;
  int total = 0;
};

enum class SampleSource { kMcts, kInjected, kAnchor };

const char* sample_source_name(SampleSource s);
SampleSource sample_source_from_name(const std::string& name);

// PRM training unit. labels/mask run parallel to trajectory.tokens().
struct LabeledSample {
  Trajectory trajectory;
  std::vector<int> labels;
  std::vector<int> mask;
  SampleSource source = SampleSource::kMcts;
  // Injection kind for injected samples ("small", "large", "tamper").
  std::string detail;
};

// 0 on step-marker tokens (the delimiters between steps, including the answer
// marker), 1 on the claim tokens in between.
std::vector<int> reasoning_mask(const std::vector<int>& tokens);

// Throws kInvalidArgument when labels, mask, and tokens disagree in length
// or carry values other than 0/1.
void check_sample(const LabeledSample& s);

// value = correct leaves / leaves in each node's subtree. Indexed by node id.
std::vector<McValue> mc_values(const ReasonTree& tree);

// One sample per root-to-leaf path, depth-first. A token is labeled 1 iff the
// value of the node owning it is >= threshold. values is indexed by node id.
std::vector<LabeledSample> label_tokens(const ReasonTree& tree, const std::vector<McValue>& values,
                                        double threshold);

struct CorrectnessGroup {
  std::string id;
  std::vector<double> correctness;
};

struct GroupVerdict {
  std::string id;
  std::size_t size = 0;
  double std = 0.0;
  bool retained = false;
  // "", "LowVariance", or "TooFew".
  std::string reason;
};

struct FilterReport {
  std::vector<GroupVerdict> groups;
  std::size_t produced = 0;
  std::size_t retained = 0;
};

double population_std(const std::vector<double>& xs);

// Drops groups whose population std is below min_std, and groups of size < 2.
FilterReport variance_filter(const std::vector<CorrectnessGroup>& groups, double min_std);

// Leaf correctness indicators of a tree, depth-first.
CorrectnessGroup tree_correctness(const ReasonTree& tree);

}  // namespace treealign
