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

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "treealign/policy.hpp"

namespace treealign {

// Decision points of the step grammar. The toy policy keeps one logit row per
// (slot, query kind, auxiliary feature) triple.
enum class Slot {
  kPlanMarker,
  kPlanClass,
  kStepMarker,
  kEvidenceClass,
  kEvidenceX0,
  kEvidenceY0,
  kEvidenceX1,
  kEvidenceY1,
  kSynthesisClass,
  kSynthesisNumber,
  kSynthesisAttribute,
  kAnswerNumber,
  kAnswerX0,
  kAnswerY0,
  kAnswerX1,
  kAnswerY1,
};
inline constexpr int kNumSlots = 16;

const char* slot_name(Slot slot);

// Maps (slot, query kind, aux) to a dense state index.
class StateLayout {
 public:
  explicit StateLayout(const VocabConfig& vocab);

  int aux_size(Slot slot) const { return aux_size_[static_cast<int>(slot)]; }
  int index(Slot slot, QueryKind kind, int aux) const;
  int num_states() const { return num_states_; }

 private:
  std::array<int, kNumSlots> aux_size_{};
  std::array<int, kNumSlots> offset_{};
  int num_states_ = 0;
};

// Discrete decoding context: grammar position plus what the scene says about
// the claims made so far. This is the policy's whole view of (task, prefix).
class ToyContext {
 public:
  ToyContext(const TokenVocab& vocab, const Task& task);

  void push(int token);
  bool done() const { return parser_.done(); }
  std::vector<int> legal() const;
  // Slot and aux feature of the next decision.
  std::pair<Slot, int> feature() const;
  const StepParser& parser() const { return parser_; }

 private:
  int first_uncited(int cls) const;
  bool remaining() const;

  const TokenVocab* vocab_;
  const Task* task_;
  StepParser parser_;
  int query_class_ = -1;
  std::vector<int> object_class_;
  std::vector<int> object_color_;
  std::vector<char> cited_;
  int target_ = -1;
  int plan_class_ = -1;
  int evidence_steps_ = 0;
  std::vector<int> evidence_per_class_;
  std::optional<Box> last_evidence_box_;
  int last_cited_ = -1;
  int last_synth_count_ = -1;
};

// Tabular log-linear policy: next_distribution is the softmax of the current
// state's logit row restricted to grammar-legal tokens.
class ToySoftmaxPolicy : public Policy {
 public:
  explicit ToySoftmaxPolicy(TokenVocab vocab);
  ToySoftmaxPolicy(TokenVocab vocab, std::vector<double> theta);

  const TokenVocab& vocab() const override { return vocab_; }
  std::vector<double> next_distribution(const Task& task,
                                        std::span<const int> prefix) const override;
  std::unique_ptr<PolicySession> open(const Task& task) const override;

  const StateLayout& layout() const { return layout_; }
  std::span<const double> parameters() const { return theta_; }
  std::span<double> mutable_parameters() { return theta_; }
  std::size_t num_parameters() const { return theta_.size(); }

  // Distribution for a context; also reports the state row used.
  std::vector<double> distribution(const Task& task, const ToyContext& ctx,
                                   int* state = nullptr) const;

  // Sum of log-probabilities of tokens[begin, end) given tokens[0, begin).
  // When grad is non-empty, weight * d(sum)/d(theta) is added to it.
  double slice_logprob(const Task& task, std::span<const int> tokens, std::size_t begin,
                       std::size_t end, std::span<double> grad = {}, double weight = 1.0) const;

  std::vector<double> grad_logprob(const Task& task, const Trajectory& t) const;

 private:
  TokenVocab vocab_;
  StateLayout layout_;
  std::vector<double> theta_;
};

struct SftReport {
  // Loss before each step, then the final loss.
  std::vector<double> losses;
};

// Mean over targets of the negative log-likelihood of the target tokens.
double sft_loss(const ToySoftmaxPolicy& policy, const std::vector<Task>& tasks,
                const std::vector<Trajectory>& targets, std::span<double> grad = {});

// Full-batch gradient descent on sft_loss. tasks[i] pairs with targets[i].
SftReport sft_train(ToySoftmaxPolicy& policy, const std::vector<Task>& tasks,
                    const std::vector<Trajectory>& targets, int steps, double lr);

}  // namespace treealign
