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
#include <string>
#include <vector>

#include "treealign/io.hpp"
#include "treealign/policy.hpp"
#include "treealign/prm.hpp"

namespace treealign {

enum class TtsStrategy { kGreedy, kSelfConsistency, kBestOfN, kBeamSearch };

// Short CLI names: greedy, sc, bon, beam.
const char* tts_strategy_name(TtsStrategy s);
TtsStrategy tts_strategy_from_name(const std::string& name);

enum class BeamAggregate { kMean, kMin };

struct TtsConfig {
  TtsStrategy strategy = TtsStrategy::kBestOfN;
  int budget_n = 8;
  double temperature = 1.0;
  double top_p = 0.9;
  std::uint64_t seed = 0;
  int max_steps = 12;
  // Continuations per beam survivor; survivors M = budget_n / beam_fanout.
  int beam_fanout = 2;
  // How completed step scores of a partial beam are combined.
  BeamAggregate beam_aggregate = BeamAggregate::kMean;
};

void validate_tts_config(const TtsConfig& cfg);

Trajectory greedy_decode(const Policy& policy, const Task& task, int max_steps = 12);

struct SelfConsistencyResult {
  Answer answer;
  std::vector<Trajectory> samples;
  // Votes for the winning answer.
  int votes = 0;
};

// Modal final answer of N samples. Ties: higher mean per-token log-prob of
// the samples giving the answer, then first occurrence.
SelfConsistencyResult self_consistency(const Policy& policy, const Task& task,
                                       const TtsConfig& cfg);

struct ScoredCandidate {
  Trajectory trajectory;
  std::vector<double> token_scores;
  double mean_score = 0.0;
  // Mean over tokens outside the answer step.
  double process_mean = 0.0;
};

struct BestOfNResult {
  std::size_t chosen = 0;
  std::vector<ScoredCandidate> candidates;
  const Trajectory& winner() const { return candidates[chosen].trajectory; }
};

// Ranks N samples by mean token score; ties by process_mean, then index.
BestOfNResult best_of_n(const Policy& policy, const Prm& prm, const Task& task,
                        const TtsConfig& cfg);

struct BeamResult {
  Trajectory trajectory;
  double score = 0.0;
  int survivors = 0;
  int rounds = 0;
};

// Step-synchronous beam: the root expands into budget_n one-step
// continuations, then every unfinished survivor into beam_fanout; the top
// M = budget_n / beam_fanout partials by aggregated step score survive.
BeamResult beam_search(const Policy& policy, const Prm& prm, const Task& task,
                       const TtsConfig& cfg);

// Final trajectory of one strategy run.
Trajectory run_strategy(const Policy& policy, const Prm& prm, const Task& task,
                        const TtsConfig& cfg);

// Same rule as is_correct: exact count, or IoU >= 0.5 for grounding.
bool answer_correct(const Answer& a, const Task& task);

struct ScalingRow {
  int n = 0;
  double mean = 0.0;
  double stderr_ = 0.0;
  std::vector<double> per_seed;
};

struct ScalingCurve {
  std::string strategy;
  std::vector<ScalingRow> rows;
};

// Accuracy per (budget, seed) over all tasks. Task i under seed s uses
// derive_seed(derive_seed(base.seed, s), i). stderr is the sample standard
// deviation over seeds divided by sqrt(seeds).
ScalingCurve scaling_curve(const Policy& policy, const Prm& prm, const std::vector<Task>& tasks,
                           TtsStrategy strategy, const std::vector<int>& budgets, int seeds,
                           const TtsConfig& base = {}, int jobs = 1);

Json scaling_curve_to_json(const ScalingCurve& c);
std::string scaling_curve_to_csv(const ScalingCurve& c);

}  // namespace treealign
