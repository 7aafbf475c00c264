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

#include "test_util.hpp"
#include "treealign/alignment.hpp"
#include "treealign/pipeline.hpp"

namespace treealign {
namespace {

using testing::plane_count_task;

Trajectory with_outcome(double s) {
  Trajectory t;
  t.task_id = "x";
  t.outcome_score = s;
  return t;
}

TEST(DropMoment, Fixture) {
  const std::vector<double> r{0.966, 0.228};
  const DropMoment d = drop_moment(r, 0.3);
  EXPECT_NEAR(d.delta, 0.738, 1e-12);
  ASSERT_TRUE(d.index.has_value());
  EXPECT_EQ(*d.index, 1u);
  EXPECT_TRUE(d.triggered);
  PrmScoreSequence s;
  s.step_scores = r;
  EXPECT_NEAR(shaped_reward(with_outcome(0.9), s, {}), 0.7 * 0.9, 1e-15);
  s.step_scores = {0.2, 0.5, 0.9};
  EXPECT_EQ(shaped_reward(with_outcome(0.9), s, {}), 0.9);
}

TEST(DropMoment, EdgeCases) {
  const DropMoment one = drop_moment(std::vector<double>{0.4}, 0.3);
  EXPECT_EQ(one.delta, 0.0);
  EXPECT_FALSE(one.index.has_value());
  EXPECT_FALSE(one.triggered);
  try {
    drop_moment(std::vector<double>{}, 0.3);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kEmptyScores);
  }
  // First index wins ties.
  EXPECT_EQ(*drop_moment(std::vector<double>{0.9, 0.5, 0.9, 0.5}, 0.3).index, 1u);
  // Binary-exact drop equal to rho: default penalizes, strict does not.
  const std::vector<double> exact{0.75, 0.25};
  ShapingConfig cfg;
  cfg.rho = 0.5;
  EXPECT_TRUE(drop_penalized(exact, cfg));
  cfg.strict = true;
  EXPECT_FALSE(drop_penalized(exact, cfg));
  Trajectory none;
  PrmScoreSequence s;
  s.step_scores = {1.0};
  try {
    shaped_reward(none, s, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kMissingOutcome);
  }
}

TEST(DropMoment, FuzzAgainstPairScan) {
  Rng rng(8);
  for (int k = 0; k < 2000; ++k) {
    std::vector<double> r(1 + rng.below(12));
    for (double& x : r) x = std::floor(rng.uniform() * 10) / 10;
    const DropMoment d = drop_moment(r, 0.3);
    if (r.size() > 1) {
      // delta may be negative for a rising sequence; it is still the max.
      double mx = r[0] - r[1];
      for (std::size_t j = 1; j < r.size(); ++j) mx = std::max(mx, r[j - 1] - r[j]);
      ASSERT_EQ(d.delta, mx);
      ASSERT_EQ(r[*d.index - 1] - r[*d.index], mx);
    }
    ASSERT_EQ(d.triggered, d.delta > 0.3);
  }
}

// Independent exact oracle: recompute every node's subtree reward sum and
// leaf count by walking each leaf's root path.
TEST(TreeAdvantages, FuzzExactIdentities) {
  Rng rng(12);
  for (int k = 0; k < 1000; ++k) {
    const ReasonTree t = testing::random_tree(rng, 150);
    std::vector<std::optional<double>> rewards(t.nodes.size());
    for (const TreeNode& n : t.nodes) {
      if (n.is_leaf())
        rewards[static_cast<std::size_t>(n.id)] = rng.uniform() * (rng.uniform() < 0.5 ? 0.7 : 1.0);
    }
    std::vector<mpq_class> sum(t.nodes.size(), 0);
    std::vector<int> count(t.nodes.size(), 0);
    for (const TreeNode& n : t.nodes) {
      if (!n.is_leaf()) continue;
      for (int a : path_to(t, n.id)) {
        sum[static_cast<std::size_t>(a)] += mpq_class(*rewards[static_cast<std::size_t>(n.id)]);
        count[static_cast<std::size_t>(a)] += 1;
      }
    }
    const auto adv = tree_advantages(t, rewards);
    ASSERT_EQ(adv.size(), t.nodes.size());
    const mpq_class v_root = sum[0] / count[0];
    EXPECT_EQ(adv[0].exact_global, 0);
    EXPECT_EQ(adv[0].exact_local, 0);
    for (const TreeNode& n : t.nodes) {
      const auto i = static_cast<std::size_t>(n.id);
      const mpq_class v = sum[i] / count[i];
      ASSERT_EQ(adv[i].leaf_count, count[i]);
      ASSERT_EQ(adv[i].exact_value, v);
      ASSERT_EQ(adv[i].exact_global, v - v_root);
      const mpq_class lv = n.parent ? v - sum[static_cast<std::size_t>(*n.parent)] /
                                              count[static_cast<std::size_t>(*n.parent)]
                                    : mpq_class(0);
      ASSERT_EQ(adv[i].exact_local, lv);
      const mpq_class both = adv[i].exact_global + adv[i].exact_local;
      ASSERT_EQ(adv[i].weighted_adv, both.get_d() / std::sqrt(static_cast<double>(count[i])));
      ASSERT_EQ(adv[i].value, v.get_d());
      // V * |L| decomposes over children.
      if (!n.is_leaf()) {
        mpq_class s = 0;
        for (int c : n.children)
          s += adv[static_cast<std::size_t>(c)].exact_value *
               adv[static_cast<std::size_t>(c)].leaf_count;
        ASSERT_EQ(s, adv[i].exact_value * adv[i].leaf_count);
      }
      // Local advantages telescope to the global one.
      mpq_class tele = 0;
      for (int a : path_to(t, n.id)) tele += adv[static_cast<std::size_t>(a)].exact_local;
      ASSERT_EQ(tele, adv[i].exact_global);
    }
  }
}

TEST(TreeAdvantages, Errors) {
  ReasonTree empty;
  try {
    tree_advantages(empty, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kEmptyTree);
  }
  Rng rng(1);
  ReasonTree t = testing::random_tree(rng, 20);
  while (t.nodes.size() < 3) t = testing::random_tree(rng, 20);
  auto r = testing::leaf_outcomes(t);
  for (auto& x : r) {
    if (x) {
      x.reset();
      break;
    }
  }
  try {
    tree_advantages(t, r);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kIncompleteRewards);
  }
}

TEST(VanillaAdvantages, Standardizes) {
  const auto a = vanilla_grpo_advantages(std::vector<double>{1, 0, 1, 0});
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(a[i], i % 2 ? -1.0 : 1.0, 1e-7);
  for (double x : vanilla_grpo_advantages(std::vector<double>{0.3, 0.3, 0.3})) EXPECT_EQ(x, 0.0);
  try {
    vanilla_grpo_advantages(std::vector<double>{1.0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kGroupTooSmall);
  }
}

std::vector<double> random_theta(std::size_t n, Rng& rng, double scale) {
  std::vector<double> th(n);
  for (double& x : th) x = scale * (2.0 * rng.uniform() - 1.0);
  return th;
}

TEST(TreeGrpoLoss, GradientFiniteDifference) {
  const TokenVocab v;
  const auto tasks = generate_tasks(71, 100, {});
  const std::size_t dim = ToySoftmaxPolicy(v).num_parameters();
  Rng rng(13);
  const double h = 1e-6;
  int with_clipping = 0;
  for (int inst = 0; inst < 100; ++inst) {
    const Task& task = tasks[static_cast<std::size_t>(inst)];
    const ToySoftmaxPolicy old(v, random_theta(dim, rng, 1.0));
    std::vector<double> th(old.parameters().begin(), old.parameters().end());
    for (double& x : th) x += 0.1 * (2.0 * rng.uniform() - 1.0);
    ToySoftmaxPolicy cur(v, th);
    TreeConfig tc;
    tc.branch_n = 2;
    tc.rollouts_t = 2;
    tc.rounds_k = 2;
    tc.seed = rng.next();
    const ReasonTree tree = build_tree(old, task, tc);
    const auto adv = tree_advantages(tree, testing::leaf_outcomes(tree));
    std::vector<double> a(adv.size());
    for (std::size_t i = 0; i < a.size(); ++i)
      a[i] = adv[i].weighted_adv + 0.3 * (rng.uniform() - 0.5);
    const double eps = inst % 3 == 0 ? 0.02 : 0.2;
    std::vector<double> g(dim, 0.0);
    const GrpoLossReport rep = tree_grpo_loss(cur, old, task, tree, a, eps, g);
    with_clipping += rep.clipped > 0;
    const auto coords = testing::fd_coordinates(g, rng, 16);
    std::vector<double> analytic, numeric;
    for (std::size_t c : coords) {
      auto p = cur.mutable_parameters();
      const double keep = p[c];
      p[c] = keep + h;
      const double up = tree_grpo_loss(cur, old, task, tree, a, eps).loss;
      p[c] = keep - h;
      const double down = tree_grpo_loss(cur, old, task, tree, a, eps).loss;
      p[c] = keep;
      analytic.push_back(g[c]);
      numeric.push_back((up - down) / (2 * h));
    }
    ASSERT_LT(testing::relative_error(analytic, numeric), 1e-4) << "instance " << inst;
  }
  // The clipped branch was exercised.
  EXPECT_GT(with_clipping, 0);
}

TEST(TreeGrpoLoss, OnPolicyValue) {
  // With theta == theta_old every ratio is 1 and the loss is -mean(A).
  const TokenVocab v;
  const ToySoftmaxPolicy p(v);
  const Task task = plane_count_task();
  TreeConfig tc;
  tc.branch_n = 2;
  tc.rollouts_t = 3;
  tc.rounds_k = 2;
  const ReasonTree tree = build_tree(p, task, tc);
  std::vector<double> a(tree.nodes.size());
  Rng rng(5);
  double sum = 0.0;
  int n = 0;
  for (const TreeNode& node : tree.nodes) {
    a[static_cast<std::size_t>(node.id)] = rng.uniform() - 0.5;
    if (node.parent && !node.tokens.empty()) {
      sum += a[static_cast<std::size_t>(node.id)];
      ++n;
    }
  }
  const GrpoLossReport rep = tree_grpo_loss(p, p, task, tree, a, 0.2);
  EXPECT_EQ(rep.nodes, n);
  EXPECT_EQ(rep.clipped, 0);
  EXPECT_NEAR(rep.loss, -sum / n, 1e-12);
  EXPECT_THROW(tree_grpo_loss(p, p, task, tree, std::vector<double>(1, 0.0), 0.2), Error);
}

TEST(FlatTree, OneLeafPerChain) {
  const TokenVocab v;
  const Task task = plane_count_task();
  std::vector<Trajectory> chains;
  SamplingConfig sc;
  for (int i = 0; i < 5; ++i) {
    sc.seed = static_cast<std::uint64_t>(i);
    chains.push_back(rollout(ToySoftmaxPolicy(v), task, std::vector<int>{}, sc));
  }
  const ReasonTree t = flat_tree(task.task_id, chains);
  ASSERT_EQ(t.nodes.size(), 6u);
  EXPECT_TRUE(check_tree(t).empty());
  for (int i = 1; i < 6; ++i)
    EXPECT_EQ(t.node(i).tokens, chains[static_cast<std::size_t>(i - 1)].tokens());
}

TEST(Config, Validation) {
  EXPECT_NO_THROW(validate_grpo_config({}));
  GrpoConfig g;
  g.epsilon = 0.0;
  EXPECT_THROW(validate_grpo_config(g), Error);
  g = {};
  g.group_size = 1;
  EXPECT_THROW(validate_grpo_config(g), Error);
  ShapingConfig s;
  s.gamma = 1.5;
  EXPECT_THROW(validate_shaping_config(s), Error);
  for (AlignMode m : all_align_modes()) EXPECT_EQ(align_mode_from_name(align_mode_name(m)), m);
  EXPECT_THROW(align_mode_from_name("bogus"), Error);
}

TEST(Align, ShortRunImprovesAndIsDeterministic) {
  const TokenVocab v;
  const auto tasks = generate_tasks(72, 24, {});
  const ToySoftmaxPolicy init = train_sft_policy(generate_tasks(73, 40, {}), v, 20, 5.0);
  AlignConfig cfg;
  cfg.grpo.steps = 12;
  cfg.grpo.lr = 0.05;
  cfg.batch_tasks = 4;
  cfg.tree.branch_n = 2;
  cfg.tree.rollouts_t = 3;
  cfg.tree.rounds_k = 2;
  cfg.eval_samples = 8;
  const OraclePrm prm(v);
  std::vector<IterationMetrics> seen;
  const AlignResult a = align(init, tasks, prm, cfg, AlignMode::kTree,
                              [&](const IterationMetrics& m) { seen.push_back(m); });
  EXPECT_EQ(seen.size(), 12u);
  EXPECT_GT(a.after.mean_outcome, a.before.mean_outcome);
  const AlignResult b = align(init, tasks, prm, cfg, AlignMode::kTree);
  EXPECT_TRUE(std::equal(a.policy.parameters().begin(), a.policy.parameters().end(),
                         b.policy.parameters().begin()));
}

}  // namespace
}  // namespace treealign
