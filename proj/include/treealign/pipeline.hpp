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

#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "treealign/config.hpp"

namespace treealign {

// Stage failure carrying the stage name; outputs of earlier stages stay on
// disk.
class StageFailure : public Error {
 public:
  StageFailure(std::string stage, const std::string& what)
      : Error(ErrorCode::kIo, "stage '" + stage + "' failed: " + what), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

struct StageRecord {
  std::string name;
  // Paths relative to the run directory.
  std::map<std::string, std::string> inputs;
  std::map<std::string, std::string> outputs;
  double seconds = 0.0;
  bool resumed = false;
};

struct RunManifest {
  std::string command;
  Json config;
  std::string config_digest;
  std::uint64_t seed = 0;
  std::string version;
  std::vector<StageRecord> stages;
  double wall_clock = 0.0;
};

Json manifest_to_json(const RunManifest& m);
RunManifest manifest_from_json(const Json& j);

struct PipelineOptions {
  std::filesystem::path out_dir;
  bool resume = false;
  int jobs = 1;
  std::string command;
  std::function<void(const std::string&)> log;
};

// synth -> sft -> tree -> label -> inject -> train-prm -> align -> tts -> eval,
// every artifact a file under out_dir, lineage in out_dir/manifest.json.
// With resume, a stage whose recorded inputs and outputs still match by
// digest is skipped.
RunManifest run_pipeline(const RunConfig& config, const PipelineOptions& opts);

// Output digests over every stage, keyed by relative path.
std::map<std::string, std::string> output_digests(const RunManifest& m);

// Building blocks shared with the CLI subcommands.
std::vector<ReasonTree> build_trees(const Policy& policy, const std::vector<Task>& tasks,
                                    const TreeConfig& cfg, int jobs = 1);

struct LabelOutput {
  std::vector<LabeledSample> samples;
  FilterReport report;
};

LabelOutput label_trees(const std::vector<ReasonTree>& trees, double threshold, double min_std);
Json filter_report_to_json(const FilterReport& r);

struct PrmEval {
  // Token AUC on anchors plus one injection kind; NaN when a class is empty.
  double auc_large = 0.0;
  double auc_small = 0.0;
  double auc_tamper = 0.0;
  double auc_all = 0.0;
  std::size_t samples = 0;
};

PrmEval evaluate_prm(const Prm& prm, const std::vector<LabeledSample>& holdout,
                     const std::vector<Task>& tasks);

ToySoftmaxPolicy train_sft_policy(const std::vector<Task>& tasks, const TokenVocab& vocab,
                                  int steps, double lr, SftReport* report = nullptr);

Json eval_summary_to_json(const EvalSummary& e);
Json iteration_to_json(const IterationMetrics& m);

// Metrics document from a run directory. Missing artifacts are listed under
// "missing" and the rest is still reported.
Json eval_report(const std::filesystem::path& run_dir);
std::string render_report(const Json& report);

// Recomputes the report from raw artifacts (re-scoring the PRM holdout,
// re-evaluating saved policies, re-averaging TTS seeds) and checks manifest
// digests. Returns the discrepancies; empty when the run verifies.
std::vector<std::string> verify_run(const std::filesystem::path& run_dir);

}  // namespace treealign
