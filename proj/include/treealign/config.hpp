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

#include "treealign/alignment.hpp"
#include "treealign/injector.hpp"
#include "treealign/io.hpp"
#include "treealign/tts.hpp"

namespace treealign {

struct SynthSection {
  // Tasks used for alignment and evaluation.
  int count = 200;
  GenerationConfig generation;
};

struct SftSection {
  int tasks = 200;
  int steps = 100;
  double lr = 5.0;
};

struct CorpusSection {
  // Tasks expanded into MCTS trees.
  int tree_tasks = 50;
  // Gold chains handed to the injector.
  int gold_tasks = 5000;
  // Tail fraction of the injection set held out for PRM evaluation.
  double holdout_fraction = 0.2;
  double threshold = 0.5;
  double min_std = 1e-6;
};

struct AlignSection {
  std::vector<AlignMode> modes = all_align_modes();
  AlignConfig config;
  // "trained" or "oracle".
  std::string prm = "trained";
};

struct TtsSection {
  std::vector<TtsStrategy> strategies{TtsStrategy::kGreedy, TtsStrategy::kSelfConsistency,
                                      TtsStrategy::kBestOfN, TtsStrategy::kBeamSearch};
  // Beam search skips odd budgets.
  std::vector<int> budgets{1, 2, 4, 8, 16, 32};
  int seeds = 20;
  int tasks = 200;
  TtsConfig config;
  // "oracle" or "trained".
  std::string prm = "oracle";
};

struct RunConfig {
  std::uint64_t seed = 0;
  VocabConfig vocab;
  SynthSection synth;
  SftSection sft;
  TreeConfig tree;
  CorpusSection corpus;
  PerturbationSpec inject;
  PrmTrainConfig prm;
  AlignSection align;
  TtsSection tts;
};

// Throws Error(kConfig) naming the offending key; unknown keys are rejected.
// Missing keys keep their defaults.
RunConfig config_from_json(const Json& j);
// Emits every key, so config_from_json(config_to_json(c)) == c field for field.
Json config_to_json(const RunConfig& c);
RunConfig load_config(const std::filesystem::path& path);
void validate_config(const RunConfig& c);

// Stage seeds: derive_seed(run seed, stage stream).
namespace stage_stream {
inline constexpr std::uint64_t kSynth = 1;
inline constexpr std::uint64_t kSft = 2;
inline constexpr std::uint64_t kTree = 3;
inline constexpr std::uint64_t kInject = 4;
inline constexpr std::uint64_t kPrm = 5;
inline constexpr std::uint64_t kAlign = 6;
inline constexpr std::uint64_t kTts = 7;
}  // namespace stage_stream

// Applies the run seed to every per-module seed field.
RunConfig with_stage_seeds(RunConfig c);

}  // namespace treealign
