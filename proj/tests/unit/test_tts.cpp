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

#include <cmath>
#include <set>

#include "test_util.hpp"
#include "treealign/tts.hpp"

namespace treealign {
namespace {

using testing::plane_count_task;
using testing::ScriptPolicy;

// Follows the gold chain but is unsure about the final count.
ScriptPolicy unsure_counter(const Task& task, std::vector<int> counts) {
  const TokenVocab v;
  std::vector<std::vector<int>> script;
  for (int tok : gold_trajectory(task, v).tokens()) script.push_back({tok});
  script.back().clear();
  for (int c : counts) script.back().push_back(v.number_token(c));
  return ScriptPolicy(v, script);
}

int count_of(const Trajectory& t) { return std::get<CountAnswer>(*t.final_answer).value; }

TEST(Beam, RecoversWhereGreedyFails) {
  const TokenVocab v;
  const Task task = plane_count_task();
  const ScriptPolicy p = unsure_counter(task, {2, 3});
  const Trajectory g = greedy_decode(p, task);
  ASSERT_TRUE(g.final_answer.has_value());
  EXPECT_EQ(count_of(g), 2);
  EXPECT_FALSE(answer_correct(*g.final_answer, task));
  TtsConfig cfg;
  cfg.strategy = TtsStrategy::kBeamSearch;
  cfg.budget_n = 8;
  const OraclePrm oracle(v);
  const BeamResult b = beam_search(p, oracle, task, cfg);
  EXPECT_EQ(b.survivors, 4);
  EXPECT_EQ(count_of(b.trajectory), 3);
  EXPECT_TRUE(is_correct(b.trajectory, task));
  const Trajectory via = run_strategy(p, oracle, task, cfg);
  EXPECT_EQ(via.tokens(), b.trajectory.tokens());
}

TEST(Beam, SurvivorsAreHalfTheBudget) {
  const TokenVocab v;
  const auto tasks = generate_tasks(81, 10, {});
  const ToySoftmaxPolicy p(v);
  const OraclePrm oracle(v);
  for (int n : {2, 4, 8, 16}) {
    TtsConfig cfg;
    cfg.strategy = TtsStrategy::kBeamSearch;
    cfg.budget_n = n;
    for (const Task& t : tasks) {
      const BeamResult b = beam_search(p, oracle, t, cfg);
      EXPECT_EQ(b.survivors, n / 2);
      EXPECT_TRUE(validate_trajectory(b.trajectory, v).empty());
    }
  }
}

TEST(BestOfN, ConstantScoresPickFirst) {
  const TokenVocab v;
  const Task task = plane_count_task();
  const ToySoftmaxPolicy p(v);
  TtsConfig cfg;
  cfg.budget_n = 6;
  const BestOfNResult r = best_of_n(p, ConstantPrm(0.5), task, cfg);
  ASSERT_EQ(r.candidates.size(), 6u);
  EXPECT_EQ(r.chosen, 0u);
}

TEST(BestOfN, PicksHighestMean) {
  const TokenVocab v;
  const auto tasks = generate_tasks(82, 20, {});
  const ToySoftmaxPolicy p(v);
  const OraclePrm oracle(v);
  for (const Task& t : tasks) {
    TtsConfig cfg;
    cfg.budget_n = 8;
    const BestOfNResult r = best_of_n(p, oracle, t, cfg);
    for (std::size_t i = 0; i < r.candidates.size(); ++i) {
      const auto& c = r.candidates[i];
      const auto& w = r.candidates[r.chosen];
      ASSERT_LE(c.mean_score, w.mean_score);
      if (c.mean_score == w.mean_score) {
        ASSERT_LE(c.process_mean, w.process_mean);
        if (c.process_mean == w.process_mean) {
          ASSERT_GE(i, r.chosen);
        }
      }
      double sum = 0.0;
      for (double s : c.token_scores) sum += s;
      ASSERT_DOUBLE_EQ(c.mean_score, sum / static_cast<double>(c.token_scores.size()));
    }
  }
}

TEST(SelfConsistency, MajorityFixture) {
  const Task task = plane_count_task();
  const ScriptPolicy p = unsure_counter(task, {3, 5});
  // Find a seed whose three samples answer 3, 3, 5 in some order.
  TtsConfig cfg;
  cfg.strategy = TtsStrategy::kSelfConsistency;
  cfg.budget_n = 3;
  bool found = false;
  for (std::uint64_t seed = 0; seed < 200 && !found; ++seed) {
    cfg.seed = seed;
    const SelfConsistencyResult r = self_consistency(p, task, cfg);
    std::multiset<int> got;
    for (const Trajectory& t : r.samples) got.insert(count_of(t));
    if (got != std::multiset<int>{3, 3, 5}) continue;
    found = true;
    EXPECT_EQ(std::get<CountAnswer>(r.answer).value, 3);
    EXPECT_EQ(r.votes, 2);
  }
  EXPECT_TRUE(found);
}

TEST(SelfConsistency, TieGoesToFirstAtEqualLogprob) {
  const Task task = plane_count_task();
  const ScriptPolicy p = unsure_counter(task, {3, 5});
  TtsConfig cfg;
  cfg.strategy = TtsStrategy::kSelfConsistency;
  cfg.budget_n = 2;
  int checked = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    cfg.seed = seed;
    const SelfConsistencyResult r = self_consistency(p, task, cfg);
    const int a = count_of(r.samples[0]);
    const int b = count_of(r.samples[1]);
    if (a == b) continue;
    ++checked;
    EXPECT_EQ(std::get<CountAnswer>(r.answer).value, a);
    EXPECT_EQ(r.votes, 1);
  }
  EXPECT_GT(checked, 0);
}

TEST(SelfConsistency, ModeOfSamples) {
  const TokenVocab v;
  const ToySoftmaxPolicy p(v);
  for (const Task& t : generate_tasks(83, 30, {})) {
    TtsConfig cfg;
    cfg.strategy = TtsStrategy::kSelfConsistency;
    cfg.budget_n = 9;
    const SelfConsistencyResult r = self_consistency(p, t, cfg);
    int best = 0;
    for (const Trajectory& s : r.samples) {
      if (!s.final_answer) continue;
      int votes = 0;
      for (const Trajectory& o : r.samples)
        votes += o.final_answer && *o.final_answer == *s.final_answer;
      best = std::max(best, votes);
    }
    EXPECT_EQ(r.votes, best);
  }
}

TEST(Config, Validation) {
  TtsConfig cfg;
  EXPECT_NO_THROW(validate_tts_config(cfg));
  cfg.budget_n = 0;
  EXPECT_THROW(validate_tts_config(cfg), Error);
  cfg = {};
  cfg.strategy = TtsStrategy::kBeamSearch;
  cfg.budget_n = 3;
  EXPECT_THROW(validate_tts_config(cfg), Error);
  cfg.budget_n = 1;
  EXPECT_THROW(validate_tts_config(cfg), Error);
  cfg = {};
  cfg.temperature = -1.0;
  EXPECT_THROW(validate_tts_config(cfg), Error);
  for (TtsStrategy s : {TtsStrategy::kGreedy, TtsStrategy::kSelfConsistency, TtsStrategy::kBestOfN,
                        TtsStrategy::kBeamSearch}) {
    EXPECT_EQ(tts_strategy_from_name(tts_strategy_name(s)), s);
  }
  EXPECT_THROW(tts_strategy_from_name("mcts"), Error);
}

TEST(ScalingCurve, StderrAndDeterminism) {
  const TokenVocab v;
  const auto tasks = generate_tasks(84, 12, {});
  const ToySoftmaxPolicy p(v);
  const OraclePrm oracle(v);
  const ScalingCurve c = scaling_curve(p, oracle, tasks, TtsStrategy::kBestOfN, {1, 4}, 5);
  ASSERT_EQ(c.rows.size(), 2u);
  for (const ScalingRow& row : c.rows) {
    ASSERT_EQ(row.per_seed.size(), 5u);
    double m = 0.0;
    for (double x : row.per_seed) {
      EXPECT_GE(x, 0.0);
      EXPECT_LE(x, 1.0);
      m += x;
    }
    m /= 5;
    double ss = 0.0;
    for (double x : row.per_seed) ss += (x - m) * (x - m);
    EXPECT_NEAR(row.mean, m, 1e-12);
    EXPECT_NEAR(row.stderr_, std::sqrt(ss / 4) / std::sqrt(5.0), 1e-12);
  }
  const ScalingCurve again =
      scaling_curve(p, oracle, tasks, TtsStrategy::kBestOfN, {1, 4}, 5, {}, 2);
  for (std::size_t i = 0; i < 2; ++i) EXPECT_EQ(c.rows[i].per_seed, again.rows[i].per_seed);
  EXPECT_NE(scaling_curve_to_csv(c).find("n,"), std::string::npos);
}

}  // namespace
}  // namespace treealign
