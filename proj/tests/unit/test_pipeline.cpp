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

#include <gtest/gtest.h>

#include <filesystem>

#include "treealign/io.hpp"
#include "treealign/pipeline.hpp"

namespace treealign {
namespace {

namespace fs = std::filesystem;

RunConfig tiny() {
  const Json j = Json::parse(R"({
    "seed": 11,
    "synth": {"count": 8},
    "sft": {"tasks": 12, "steps": 5},
    "tree": {"branch_n": 2, "rollouts_t": 2, "rounds_k": 1},
    "corpus": {"tree_tasks": 3, "gold_tasks": 40},
    "prm": {"epochs": 1},
    "align": {"modes": ["vanilla", "tree"], "steps": 2, "batch_tasks": 2, "eval_samples": 2},
    "tts": {"budgets": [1, 2], "seeds": 2, "tasks": 4}
  })");
  return config_from_json(j);
}

fs::path fresh(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("treealign_pipe_" + name);
  fs::remove_all(p);
  return p;
}

RunManifest run(const fs::path& dir, bool resume = false) {
  PipelineOptions o;
  o.out_dir = dir;
  o.resume = resume;
  o.command = "test";
  return run_pipeline(tiny(), o);
}

TEST(Pipeline, DeterministicAcrossRunsAndJobs) {
  const fs::path dir_a = fresh("a");
  const RunManifest a = run(dir_a);
  PipelineOptions o;
  o.out_dir = fresh("b");
  o.jobs = 2;
  const RunManifest b = run_pipeline(tiny(), o);
  const auto da = output_digests(a);
  EXPECT_FALSE(da.empty());
  EXPECT_EQ(da, output_digests(b));
  EXPECT_EQ(a.config_digest, b.config_digest);
  std::vector<std::string> names;
  for (const StageRecord& s : a.stages) names.push_back(s.name);
  EXPECT_EQ(names, (std::vector<std::string>{"synth", "sft", "tree", "label", "inject", "train-prm",
                                             "align", "tts", "eval"}));
  EXPECT_TRUE(verify_run(dir_a).empty());
}

TEST(Pipeline, ResumeSkipsIntactStages) {
  const fs::path dir = fresh("resume");
  const RunManifest first = run(dir);
  const RunManifest again = run(dir, true);
  for (const StageRecord& s : again.stages) EXPECT_TRUE(s.resumed) << s.name;
  EXPECT_EQ(output_digests(first), output_digests(again));

  // Damage the PRM artifact: training reruns and rewrites identical bytes,
  // so later stages still match by digest and stay skipped.
  write_file_atomic(dir / "prm.json", "{}");
  const RunManifest third = run(dir, true);
  for (const StageRecord& s : third.stages) EXPECT_EQ(s.resumed, s.name != "train-prm") << s.name;
  EXPECT_EQ(output_digests(first), output_digests(third));
  const RunManifest back = manifest_from_json(read_json(dir / "manifest.json"));
  EXPECT_EQ(output_digests(back), output_digests(third));
}

TEST(Pipeline, VerifyFlagsTampering) {
  const fs::path dir = fresh("verify");
  run(dir);
  EXPECT_TRUE(verify_run(dir).empty());
  Json report = read_json(dir / "report.json");
  report["tampered"] = true;
  write_json_atomic(dir / "report.json", report);
  EXPECT_FALSE(verify_run(dir).empty());
}

TEST(Pipeline, ReportListsMissingArtifacts) {
  const fs::path dir = fresh("missing");
  fs::create_directories(dir);
  const Json r = eval_report(dir);
  ASSERT_TRUE(r.contains("missing"));
  EXPECT_FALSE(r["missing"].empty());
  EXPECT_FALSE(render_report(r).empty());
}

}  // namespace
}  // namespace treealign
