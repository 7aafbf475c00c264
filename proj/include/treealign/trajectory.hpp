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

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "treealign/box.hpp"

namespace treealign {

enum class StepKind { kPlan = 0, kEvidence = 1, kSynthesis = 2, kAnswer = 3 };
enum class QueryKind { kCount = 0, kGround = 1 };

const char* step_kind_name(StepKind kind);
std::optional<StepKind> step_kind_from_name(std::string_view name);

struct VocabConfig {
  std::vector<std::string> classes{"plane", "ship", "storage-tank", "vehicle"};
  std::vector<std::string> attributes{"red", "white", "gray", "blue"};
  // Coordinate tokens cover 0..grid_size inclusive.
  int grid_size = 32;
  // Number tokens cover 0..max_count inclusive.
  int max_count = 11;
  // The generation grammar forces an answer once this many steps exist
  // minus one.
  int max_steps = 12;

  friend bool operator==(const VocabConfig&, const VocabConfig&) = default;
};

enum class TokenType { kMarker, kClass, kCoord, kNumber, kAttribute };

// Structured token set. Layout: 4 step markers, then class, coordinate,
// number and attribute tokens in that order.
class TokenVocab {
 public:
  TokenVocab() : TokenVocab(VocabConfig{}) {}
  explicit TokenVocab(VocabConfig config);

  const VocabConfig& config() const { return config_; }
  int size() const { return size_; }
  int num_classes() const { return static_cast<int>(config_.classes.size()); }
  int num_attributes() const { return static_cast<int>(config_.attributes.size()); }

  int marker(StepKind kind) const { return static_cast<int>(kind); }
  int class_token(int cls) const;
  int coord_token(int value) const;
  int number_token(int value) const;
  int attribute_token(int attribute) const;

  bool contains(int token) const { return token >= 0 && token < size_; }
  // Both throw Error(kVocabulary) for ids outside the vocabulary.
  TokenType type_of(int token) const;
  int value_of(int token) const;

  // -1 when absent.
  int class_index(std::string_view name) const;
  int attribute_index(std::string_view name) const;
  std::string token_name(int token) const;

 private:
  VocabConfig config_;
  int class_begin_;
  int coord_begin_;
  int number_begin_;
  int attribute_begin_;
  int size_;
};

struct BoxClaim {
  int cls = 0;
  Box box;
  friend bool operator==(const BoxClaim&, const BoxClaim&) = default;
};

// "count of class cls is count".
struct CountFact {
  int cls = 0;
  int count = 0;
  friend bool operator==(const CountFact&, const CountFact&) = default;
};

// "the object under discussion has this attribute".
struct AttributeFact {
  int attribute = 0;
  friend bool operator==(const AttributeFact&, const AttributeFact&) = default;
};

using Claim = std::variant<std::monostate, BoxClaim, CountFact, AttributeFact>;

struct CountAnswer {
  int value = 0;
  friend bool operator==(const CountAnswer&, const CountAnswer&) = default;
};
struct GroundingAnswer {
  Box box;
  friend bool operator==(const GroundingAnswer&, const GroundingAnswer&) = default;
};
struct LabelAnswer {
  std::string label;
  friend bool operator==(const LabelAnswer&, const LabelAnswer&) = default;
};

using Answer = std::variant<CountAnswer, GroundingAnswer, LabelAnswer>;

struct Step {
  StepKind kind = StepKind::kPlan;
  std::vector<int> tokens;
  Claim claim;
  friend bool operator==(const Step&, const Step&) = default;
};

struct Trajectory {
  std::string task_id;
  std::vector<Step> steps;
  // Natural-log probability of each token under the generating policy.
  std::vector<double> token_logprobs;
  std::optional<Answer> final_answer;
  std::optional<double> outcome_score;

  std::vector<int> tokens() const;
  friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

std::size_t token_count(const Trajectory& t);

// Index of the first token of every step in the flat token sequence, plus a
// final entry equal to the token count.
std::vector<std::size_t> step_offsets(const Trajectory& t);

// Incremental parser for the structured step grammar:
//   plan      := PLAN class
//   evidence  := EVID class x0 y0 x1 y1
//   synthesis := SYNTH class number | SYNTH attribute
//   answer    := ANS number | ANS x0 y0 x1 y1
// Parsing depends only on token types; legal_next() additionally applies the
// generation rules for a given task shape.
class StepParser {
 public:
  explicit StepParser(const TokenVocab& vocab) : vocab_(&vocab) {}

  // Throws Error(kVocabulary) on unknown tokens or grammar violations.
  void push(int token);

  bool done() const { return answer_.has_value(); }
  bool at_step_boundary() const { return !open_kind_.has_value(); }
  const std::vector<Step>& steps() const { return steps_; }
  std::optional<StepKind> open_kind() const { return open_kind_; }
  std::span<const int> open_tokens() const { return open_tokens_; }
  const std::optional<Answer>& answer() const { return answer_; }
  std::size_t tokens_consumed() const { return consumed_; }

  // Legal next tokens (ascending ids) when generating for a task of the given
  // query kind on a width x height scene. Empty once done.
  std::vector<int> legal_next(QueryKind query, int width, int height) const;

 private:
  void close_step(Claim claim);

  const TokenVocab* vocab_;
  std::vector<Step> steps_;
  std::optional<StepKind> open_kind_;
  std::vector<int> open_tokens_;
  std::optional<Answer> answer_;
  std::size_t consumed_ = 0;
};

// Builds a trajectory from a flat token sequence. A trailing partial step is
// kept as a step with an empty claim.
Trajectory trajectory_from_tokens(const TokenVocab& vocab, std::string task_id,
                                  std::span<const int> tokens, std::vector<double> logprobs);

Step make_plan_step(const TokenVocab& vocab, int cls);
Step make_evidence_step(const TokenVocab& vocab, const BoxClaim& claim);
Step make_count_fact_step(const TokenVocab& vocab, const CountFact& fact);
Step make_attribute_fact_step(const TokenVocab& vocab, const AttributeFact& fact);
Step make_answer_step(const TokenVocab& vocab, const Answer& answer);

enum class Violation {
  kAnswerNotFinal,
  kLogprobLengthMismatch,
  kPositiveLogprob,
  kOutcomeOutOfRange,
  kUnknownToken,
  kUnknownClass,
  kInvalidBox,
  kClaimTokenMismatch,
  kAnswerMismatch,
};

const char* violation_name(Violation v);

// Empty iff every trajectory and step invariant holds. Pure.
std::vector<Violation> validate_trajectory(const Trajectory& t, const TokenVocab& vocab);

}  // namespace treealign
