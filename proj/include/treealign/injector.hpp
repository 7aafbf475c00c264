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
#include <map>
#include <string>
#include <vector>

#include "treealign/mc_labeler.hpp"
#include "treealign/toy_env.hpp"

namespace treealign {

enum class PerturbationKind { kSmallJitter, kLargeJitter, kTamper };

const char* perturbation_name(PerturbationKind kind);

struct PerturbationSpec {
  double small_lo = 0.1;
  double small_hi = 0.5;
  std::uint64_t seed = 0;
  // Mix weights keyed by "anchor", "small", "large", "tamper".
  std::map<std::string, double> ratio{
      {"anchor", 1.0}, {"small", 1.0}, {"large", 1.0}, {"tamper", 1.0}};
  // Rejection attempts for a background placement.
  int large_attempts = 1000;
};

void validate_perturbation_spec(const PerturbationSpec& spec);

// Replaces one evidence box claim. SmallJitter keeps IoU with the original
// inside [small_lo, small_hi]; LargeJitter keeps the size and moves the box
// onto background (IoU 0 with every scene object). Labels are 1 before the
// perturbed claim tokens and 0 from them onward.
LabeledSample inject_box(const Trajectory& t, const Task& task, const TokenVocab& vocab,
                         PerturbationKind kind, std::uint64_t seed,
                         const PerturbationSpec& spec = {});

// Replaces one count or attribute fact with a different in-domain value:
// count k becomes k' in [0, k+3] \ {k} (capped by the number tokens),
// attributes change to another vocabulary attribute.
LabeledSample inject_fact(const Trajectory& t, const Task& task, const TokenVocab& vocab,
                          std::uint64_t seed);

LabeledSample make_anchor(const Trajectory& t);

struct InjectionSkip {
  std::size_t index = 0;
  std::string task_id;
  std::string kind;
  std::string reason;
};

struct InjectionResult {
  std::vector<LabeledSample> samples;
  std::vector<InjectionSkip> skipped;
  std::map<std::string, std::size_t> planned;
};

// Splits gold.size() slots over the mix by largest remainder, shuffles the
// assignment with spec.seed, and perturbs gold[i] with seed
// derive_seed(spec.seed, i). tasks[i] pairs with gold[i].
InjectionResult build_injection_set(const std::vector<Trajectory>& gold,
                                    const std::vector<Task>& tasks, const TokenVocab& vocab,
                                    const PerturbationSpec& spec);

// Largest-remainder apportionment of n slots over weights (ties: lower index).
std::vector<std::size_t> apportion(std::size_t n, const std::vector<double>& weights);

}  // namespace treealign
