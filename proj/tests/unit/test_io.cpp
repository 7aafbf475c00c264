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
#include <fstream>

#include "test_util.hpp"
#include "treealign/config.hpp"
#include "treealign/injector.hpp"
#include "treealign/io.hpp"

namespace treealign {
namespace {

namespace fs = std::filesystem;

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("treealign_io_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error";
  return ErrorCode::kInvalidArgument;
}

TEST(Codecs, TaskAndTrajectoryRoundTrip) {
  const TokenVocab v;
  Rng rng(3);
  const ToySoftmaxPolicy p(v);
  for (const Task& t : generate_tasks(101, 200, {})) {
    const Json tj = task_to_json(t);
    EXPECT_EQ(task_to_json(task_from_json(Json::parse(tj.dump()))), tj);
    SamplingConfig cfg;
    cfg.seed = rng.next();
    const Trajectory r = rollout(p, t, std::vector<int>{}, cfg);
    const Json rj = trajectory_to_json(r);
    const Trajectory back = trajectory_from_json(Json::parse(rj.dump()));
    EXPECT_EQ(back.tokens(), r.tokens());
    EXPECT_EQ(back.token_logprobs, r.token_logprobs);
    EXPECT_EQ(back.outcome_score, r.outcome_score);
    EXPECT_EQ(trajectory_to_json(back), rj);
  }
}

TEST(Codecs, TreeSampleAndModelRoundTrip) {
  const TokenVocab v;
  const Task task = testing::plane_count_task();
  TreeConfig tc;
  tc.branch_n = 2;
  tc.rollouts_t = 2;
  tc.rounds_k = 2;
  const ReasonTree t = build_tree(ToySoftmaxPolicy(v), task, tc);
  const Json j = tree_to_json(t);
  const ReasonTree back = tree_from_json(Json::parse(j.dump()));
  EXPECT_EQ(tree_to_json(back), j);
  EXPECT_TRUE(check_tree(back).empty());

  const LabeledSample s =
      inject_box(gold_trajectory(task, v), task, v, PerturbationKind::kSmallJitter, 1);
  EXPECT_EQ(sample_to_json(sample_from_json(sample_to_json(s))), sample_to_json(s));

  Rng rng(1);
  std::vector<double> th(ToySoftmaxPolicy(v).num_parameters());
  for (double& x : th) x = rng.uniform();
  const ToySoftmaxPolicy pol(v, th);
  const ToySoftmaxPolicy pb = policy_from_json(Json::parse(policy_to_json(pol).dump()));
  EXPECT_TRUE(std::equal(pb.parameters().begin(), pb.parameters().end(), th.begin()));

  std::vector<double> phi(prm_feature::kCount);
  for (double& x : phi) x = rng.uniform() - 0.5;
  const TinyPrm prm(v, phi);
  const TinyPrm qb = prm_from_json(Json::parse(prm_to_json(prm, "test", 4).dump()));
  EXPECT_TRUE(std::equal(qb.parameters().begin(), qb.parameters().end(), phi.begin()));
}

TEST(Codecs, StrictKeys) {
  const Task task = testing::plane_count_task();
  Json j = task_to_json(task);
  j["extra"] = 1;
  EXPECT_EQ(code_of([&] { task_from_json(j); }), ErrorCode::kIo);
  j = task_to_json(task);
  j.erase("task_id");
  EXPECT_EQ(code_of([&] { task_from_json(j); }), ErrorCode::kIo);
  j = task_to_json(task);
  j["task_id"] = 7;
  EXPECT_EQ(code_of([&] { task_from_json(j); }), ErrorCode::kIo);
  Json b = box_to_json({1, 2, 3, 4});
  EXPECT_EQ(box_from_json(b), (Box{1, 2, 3, 4}));
  try {
    Json t = trajectory_to_json(gold_trajectory(task, TokenVocab{}));
    t["steps"][0]["bogus"] = true;
    trajectory_from_json(t);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("bogus"), std::string::npos);
  }
}

TEST(Files, AtomicWriteAndJsonl) {
  const fs::path dir = scratch("files");
  const fs::path f = dir / "a.jsonl";
  write_jsonl_atomic(f, {Json{{"x", 1}}, Json{{"x", 2}}});
  const auto back = read_jsonl(f);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1]["x"], 2);
  // No temp siblings left behind.
  int entries = 0;
  for (const auto& e : fs::directory_iterator(dir)) entries += e.is_regular_file();
  EXPECT_EQ(entries, 1);
  write_file_atomic(f, "{\"x\": 1}\nnot json\n");
  EXPECT_THROW(read_jsonl(f), Error);
  EXPECT_THROW(read_file(dir / "missing"), Error);
  write_json_atomic(dir / "b.json", Json{{"k", "v"}});
  EXPECT_EQ(read_file(dir / "b.json").back(), '\n');
  EXPECT_EQ(read_json(dir / "b.json")["k"], "v");
}

TEST(Files, Sha256KnownVectors) {
  EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Config, RoundTripAndStrictness) {
  RunConfig c;
  c.seed = 9;
  c.tree.branch_n = 5;
  c.align.modes = {AlignMode::kTree};
  c.tts.budgets = {2, 4};
  const Json j = config_to_json(c);
  EXPECT_EQ(config_to_json(config_from_json(j)), j);
  EXPECT_EQ(config_to_json(config_from_json(Json::object())), config_to_json(RunConfig{}));

  Json bad = j;
  bad["tree"]["branchN"] = 3;
  try {
    config_from_json(bad);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kConfig);
    EXPECT_NE(std::string(e.what()).find("branchN"), std::string::npos);
  }
  bad = j;
  bad["tree"]["branch_n"] = "three";
  EXPECT_EQ(code_of([&] { config_from_json(bad); }), ErrorCode::kConfig);
  bad = j;
  bad["align"]["modes"] = {"tree", "sideways"};
  EXPECT_EQ(code_of([&] { config_from_json(bad); }), ErrorCode::kConfig);
  bad = j;
  bad["unknown_section"] = Json::object();
  EXPECT_EQ(code_of([&] { config_from_json(bad); }), ErrorCode::kConfig);
}

TEST(Config, Validation) {
  EXPECT_NO_THROW(validate_config(RunConfig{}));
  RunConfig c;
  c.corpus.holdout_fraction = 1.0;
  EXPECT_THROW(validate_config(c), Error);
  c = {};
  c.tree.rollouts_t = 0;
  EXPECT_THROW(validate_config(c), Error);
  c = {};
  c.tts.budgets = {3};
  EXPECT_NO_THROW(validate_config(c));  // beam skips odd budgets
  c.tts.budgets = {0};
  EXPECT_THROW(validate_config(c), Error);
}

TEST(Config, StageSeedsDiffer) {
  RunConfig c;
  c.seed = 5;
  const RunConfig s = with_stage_seeds(c);
  EXPECT_EQ(s.tree.seed, derive_seed(5, stage_stream::kTree));
  EXPECT_EQ(s.inject.seed, derive_seed(5, stage_stream::kInject));
  EXPECT_NE(s.tree.seed, s.inject.seed);
}

TEST(Config, LoadFile) {
  const fs::path dir = scratch("cfg");
  write_file_atomic(dir / "c.json", "{\"seed\": 3, \"tree\": {\"rounds_k\": 2}}");
  const RunConfig c = load_config(dir / "c.json");
  EXPECT_EQ(c.seed, 3u);
  EXPECT_EQ(c.tree.rounds_k, 2);
  write_file_atomic(dir / "c.json", "{\"seed\": 3,");
  EXPECT_EQ(code_of([&] { load_config(dir / "c.json"); }), ErrorCode::kConfig);
}

}  // namespace
}  // namespace treealign
