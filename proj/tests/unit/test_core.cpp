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

#include <algorithm>
#include <numeric>

#include "treealign/box.hpp"
#include "treealign/common.hpp"
#include "treealign/trajectory.hpp"

namespace treealign {
namespace {

// Cell-count oracle: paint both boxes on a grid.
std::pair<int, int> raster_iou(const Box& a, const Box& b) {
  int inter = 0, uni = 0;
  for (int y = 0; y < 32; ++y) {
    for (int x = 0; x < 32; ++x) {
      const bool in_a = x >= a.x_min && x < a.x_max && y >= a.y_min && y < a.y_max;
      const bool in_b = x >= b.x_min && x < b.x_max && y >= b.y_min && y < b.y_max;
      inter += in_a && in_b;
      uni += in_a || in_b;
    }
  }
  return {inter, uni};
}

TEST(Box, IouExamples) {
  EXPECT_EQ(compute_iou({0, 0, 10, 10}, {0, 0, 10, 10}), 1.0);
  EXPECT_EQ(compute_iou({0, 0, 10, 10}, {20, 20, 30, 30}), 0.0);
  const auto [i, u] = raster_iou({0, 0, 10, 10}, {5, 0, 15, 10});
  EXPECT_EQ(i * 3, u);
  EXPECT_DOUBLE_EQ(compute_iou({0, 0, 10, 10}, {5, 0, 15, 10}), 1.0 / 3.0);
}

TEST(Box, DegenerateRejected) {
  EXPECT_THROW(compute_iou({0, 0, 0, 5}, {0, 0, 3, 3}), Error);
  EXPECT_THROW(compute_iou({0, 0, 3, 3}, {4, 4, 2, 6}), Error);
}

TEST(Box, MatchesRasterOracle) {
  Rng rng(11);
  auto random_box = [&] {
    const int x0 = rng.uniform_int(0, 31), y0 = rng.uniform_int(0, 31);
    return Box{x0, y0, rng.uniform_int(x0 + 1, 32), rng.uniform_int(y0 + 1, 32)};
  };
  for (int k = 0; k < 20000; ++k) {
    const Box a = random_box(), b = random_box();
    const auto [inter, uni] = raster_iou(a, b);
    const auto exact = iou_fraction(a, b);
    // Cross-multiplied so the comparison is exact.
    ASSERT_EQ(exact.first * uni, static_cast<std::int64_t>(inter) * exact.second);
    ASSERT_EQ(compute_iou(a, b), compute_iou(b, a));
    ASSERT_EQ(compute_iou(a, a), 1.0);
    const double iou = compute_iou(a, b);
    ASSERT_GE(iou, 0.0);
    ASSERT_LE(iou, 1.0);
  }
}

TEST(Box, ExhaustiveSmallGrid) {
  // Every pair of boxes on a 4x4 grid.
  std::vector<Box> boxes;
  for (int x0 = 0; x0 < 4; ++x0)
    for (int x1 = x0 + 1; x1 <= 4; ++x1)
      for (int y0 = 0; y0 < 4; ++y0)
        for (int y1 = y0 + 1; y1 <= 4; ++y1) boxes.push_back({x0, y0, x1, y1});
  for (const Box& a : boxes) {
    for (const Box& b : boxes) {
      const auto [inter, uni] = raster_iou(a, b);
      ASSERT_DOUBLE_EQ(compute_iou(a, b), static_cast<double>(inter) / uni);
    }
  }
}

TEST(Vocab, LayoutAndRoundTrip) {
  const TokenVocab v;
  EXPECT_EQ(v.size(), 4 + 4 + 33 + 12 + 4);
  EXPECT_EQ(v.type_of(v.marker(StepKind::kAnswer)), TokenType::kMarker);
  EXPECT_EQ(v.type_of(v.class_token(2)), TokenType::kClass);
  EXPECT_EQ(v.value_of(v.coord_token(17)), 17);
  EXPECT_EQ(v.value_of(v.number_token(11)), 11);
  EXPECT_EQ(v.type_of(v.attribute_token(3)), TokenType::kAttribute);
  EXPECT_EQ(v.class_index("ship"), 1);
  EXPECT_EQ(v.class_index("tank"), -1);
  EXPECT_THROW(v.type_of(v.size()), Error);
  EXPECT_THROW(v.type_of(-1), Error);
}

Trajectory three_steps(const TokenVocab& v) {
  Trajectory t;
  t.task_id = "t";
  t.steps = {make_plan_step(v, 0), make_count_fact_step(v, {0, 2}),
             make_answer_step(v, CountAnswer{2})};
  t.token_logprobs.assign(token_count(t), -0.1);
  t.final_answer = CountAnswer{2};
  t.outcome_score = 1.0;
  return t;
}

TEST(Trajectory, ValidateExamples) {
  const TokenVocab v;
  Trajectory t = three_steps(v);
  EXPECT_TRUE(validate_trajectory(t, v).empty());

  Trajectory early = t;
  std::rotate(early.steps.rbegin(), early.steps.rbegin() + 1, early.steps.rend());
  const auto viol = validate_trajectory(early, v);
  EXPECT_NE(std::find(viol.begin(), viol.end(), Violation::kAnswerNotFinal), viol.end());

  Trajectory short_lp = t;
  short_lp.token_logprobs.pop_back();
  EXPECT_EQ(validate_trajectory(short_lp, v),
            std::vector<Violation>{Violation::kLogprobLengthMismatch});

  Trajectory pos = t;
  pos.token_logprobs[0] = 0.5;
  EXPECT_EQ(validate_trajectory(pos, v), std::vector<Violation>{Violation::kPositiveLogprob});

  Trajectory out = t;
  out.outcome_score = 1.5;
  EXPECT_EQ(validate_trajectory(out, v), std::vector<Violation>{Violation::kOutcomeOutOfRange});

  Trajectory mism = t;
  mism.final_answer = CountAnswer{5};
  EXPECT_EQ(validate_trajectory(mism, v), std::vector<Violation>{Violation::kAnswerMismatch});

  // Pure: repeated calls agree and leave the input untouched.
  const Trajectory copy = early;
  EXPECT_EQ(validate_trajectory(early, v), validate_trajectory(early, v));
  EXPECT_EQ(copy, early);
}

TEST(Trajectory, TokenCount) {
  const TokenVocab v;
  Trajectory empty;
  EXPECT_EQ(token_count(empty), 0u);
  Trajectory t;
  t.steps = {make_plan_step(v, 0), make_evidence_step(v, {0, {1, 1, 3, 3}}),
             make_count_fact_step(v, {0, 1})};
  // 2 + 6 + 3 tokens.
  EXPECT_EQ(token_count(t), 11u);
  Trajectory ans;
  ans.steps.push_back({StepKind::kAnswer, {v.marker(StepKind::kAnswer)}, {}});
  EXPECT_EQ(token_count(ans), 1u);
  EXPECT_EQ(step_offsets(t), (std::vector<std::size_t>{0, 2, 8, 11}));
}

TEST(Parser, RoundTripAndRejects) {
  const TokenVocab v;
  const Trajectory t = three_steps(v);
  const Trajectory back = trajectory_from_tokens(v, "t", t.tokens(), t.token_logprobs);
  EXPECT_EQ(back.steps, t.steps);
  EXPECT_EQ(back.final_answer, t.final_answer);

  StepParser p(v);
  EXPECT_THROW(p.push(v.coord_token(3)), Error);  // must open with a marker
  StepParser q(v);
  q.push(v.marker(StepKind::kPlan));
  EXPECT_FALSE(q.at_step_boundary());
  EXPECT_THROW(q.push(v.number_token(1)), Error);
}

TEST(Parser, LegalNextFollowsQueryKind) {
  const TokenVocab v;
  StepParser p(v);
  p.push(v.marker(StepKind::kPlan));
  p.push(v.class_token(0));
  p.push(v.marker(StepKind::kAnswer));
  for (int tok : p.legal_next(QueryKind::kCount, 32, 32))
    EXPECT_EQ(v.type_of(tok), TokenType::kNumber);
  for (int tok : p.legal_next(QueryKind::kGround, 32, 32))
    EXPECT_EQ(v.type_of(tok), TokenType::kCoord);
}

TEST(Seeds, DeriveIsStableAndSpread) {
  EXPECT_EQ(derive_seed(7, 3), derive_seed(7, 3));
  EXPECT_NE(derive_seed(7, 3), derive_seed(7, 4));
  EXPECT_NE(derive_seed(7, 3), derive_seed(8, 3));
  Rng a(5), b(5);
  for (int i = 0; i < 100; ++i) ASSERT_EQ(a.next(), b.next());
  Rng r(1);
  std::vector<int> hist(6, 0);
  for (int i = 0; i < 60000; ++i) ++hist[static_cast<std::size_t>(r.uniform_int(0, 5))];
  for (int h : hist) EXPECT_NEAR(h, 10000, 500);
}

}  // namespace
}  // namespace treealign
