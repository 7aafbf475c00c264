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
#include <span>
#include <string>
#include <vector>

#include "treealign/mc_labeler.hpp"
#include "treealign/toy_env.hpp"

namespace treealign {

enum class StepPooling { kMean, kMin };

struct PrmScoreSequence {
  std::vector<double> token_scores;
  // One aggregate per step (mean of its token scores by default).
  std::vector<double> step_scores;
};

// Token-level scorer. Implementations must be safe for concurrent scoring.
class Prm {
 public:
  virtual ~Prm() = default;
  virtual std::vector<double> token_scores(const Task& task, const Trajectory& t) const = 0;
};

// Scores through the interface boundary: throws PrmFault(kLengthMismatch)
// when the score count differs from the token count and PrmFault(kOutOfRange)
// for scores outside [0, 1].
PrmScoreSequence score_trajectory(const Prm& prm, const Task& task, const Trajectory& t,
                                  StepPooling pooling = StepPooling::kMean);

// Aggregates token scores per step. Steps without tokens get score 1.
std::vector<double> pool_steps(const Trajectory& t, std::span<const double> token_scores,
                               StepPooling pooling = StepPooling::kMean);

double mean_score(std::span<const double> scores);

class ConstantPrm : public Prm {
 public:
  explicit ConstantPrm(double value) : value_(value) {}
  std::vector<double> token_scores(const Task& task, const Trajectory& t) const override;

 private:
  double value_;
};

// Scene-aware verifier: 1 up to the first claim that contradicts the scene,
// 0 from that claim onward.
class OraclePrm : public Prm {
 public:
  explicit OraclePrm(TokenVocab vocab) : vocab_(std::move(vocab)) {}
  std::vector<double> token_scores(const Task& task, const Trajectory& t) const override;

 private:
  TokenVocab vocab_;
};

// Indicator features of the toy PRM. Claim tokens see their whole step and
// all earlier steps; step markers see only earlier steps.
namespace prm_feature {
inline constexpr int kBias = 0;
inline constexpr int kRoleKind = 1;  // + role * 4 + step kind (8)
inline constexpr int kEarlierError = 9;
inline constexpr int kStepIndex = 10;     // + min(step, 11) (12)
inline constexpr int kEvidence = 22;      // exact, iou>=.5, iou>=.1, iou>0, iou 0, duplicate
inline constexpr int kCountFact = 28;     // |delta| 0, 1, 2, >=3
inline constexpr int kAttribute = 32;     // match, mismatch, nothing cited
inline constexpr int kPlan = 35;          // query class, other class
inline constexpr int kCountAnswer = 37;   // |delta| 0, 1, 2, >=3
inline constexpr int kGroundAnswer = 41;  // exact, iou>=.5, iou>=.1, iou>0, iou 0
inline constexpr int kPartial = 46;
inline constexpr int kCount = 47;
}  // namespace prm_feature

// Active feature ids for every token of t.
std::vector<std::vector<int>> prm_features(const Task& task, const Trajectory& t,
                                           const TokenVocab& vocab);

enum class LossNormalization { kSequenceLength, kMaskedCount };

// score = sigmoid(sum of phi over active features).
class TinyPrm : public Prm {
 public:
  static constexpr const char* kFeatureSpec = "toy-step-indicators-v1";

  explicit TinyPrm(TokenVocab vocab);
  TinyPrm(TokenVocab vocab, std::vector<double> phi);

  std::vector<double> token_scores(const Task& task, const Trajectory& t) const override;

  const TokenVocab& vocab() const { return vocab_; }
  std::span<const double> parameters() const { return phi_; }
  std::span<double> mutable_parameters() { return phi_; }

 private:
  TokenVocab vocab_;
  std::vector<double> phi_;
};

inline constexpr double kScoreClamp = 1e-12;

// Masked binary cross-entropy over the sample's tokens divided by the token
// count (or by the masked count). Scores are clamped to [1e-12, 1 - 1e-12]
// before the log. When grad is non-empty, weight * dloss/dphi is added.
double prm_loss(const TinyPrm& prm, const Task& task, const LabeledSample& sample,
                std::span<double> grad = {}, double weight = 1.0,
                LossNormalization norm = LossNormalization::kSequenceLength);

// Same objective on externally supplied scores.
double masked_bce(std::span<const double> scores, std::span<const int> labels,
                  std::span<const int> mask,
                  LossNormalization norm = LossNormalization::kSequenceLength);

struct PrmTrainConfig {
  double lr = 0.05;
  int epochs = 2;
  int batch = 32;
  std::uint64_t seed = 0;
  LossNormalization norm = LossNormalization::kSequenceLength;
};

struct PrmTrainReport {
  // Mean sample loss over each epoch, evaluated after the epoch.
  std::vector<double> epoch_loss;
  double initial_loss = 0.0;
  std::size_t samples = 0;
};

// Adam on mini-batches in a seeded shuffled order. tasks must contain the
// task of every sample (matched by task_id). Throws kNoData on empty data.
TinyPrm train_prm(const std::vector<LabeledSample>& data, const std::vector<Task>& tasks,
                  const TokenVocab& vocab, const PrmTrainConfig& cfg,
                  PrmTrainReport* report = nullptr);

// Mann-Whitney AUC of scores for positives (label 1) over negatives
// (label 0); ties count one half. NaN when either class is empty.
double auc(std::span<const double> scores, std::span<const int> labels);

// Token-level AUC over masked tokens of the given samples.
double token_auc(const Prm& prm, const std::vector<LabeledSample>& samples,
                 const std::vector<Task>& tasks);

}  // namespace treealign
