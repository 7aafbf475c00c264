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

#include "treealign/trajectory.hpp"

#include <cmath>
#include <string>

#include "treealign/common.hpp"

namespace treealign {

const char* step_kind_name(StepKind kind) {
  switch (kind) {
    case StepKind::kPlan:
      return "plan";
    case StepKind::kEvidence:
      return "evidence";
    case StepKind::kSynthesis:
      return "synthesis";
    case StepKind::kAnswer:
      return "answer";
  }
  return "?";
}

std::optional<StepKind> step_kind_from_name(std::string_view name) {
  if (name == "plan") return StepKind::kPlan;
  if (name == "evidence") return StepKind::kEvidence;
  if (name == "synthesis") return StepKind::kSynthesis;
  if (name == "answer") return StepKind::kAnswer;
  return std::nullopt;
}

TokenVocab::TokenVocab(VocabConfig config) : config_(std::move(config)) {
  if (config_.grid_size < 1 || config_.max_count < 0 || config_.max_steps < 2) {
    throw Error(ErrorCode::kInvalidArgument, "TokenVocab: bad config");
  }
  class_begin_ = 4;
  coord_begin_ = class_begin_ + num_classes();
  number_begin_ = coord_begin_ + config_.grid_size + 1;
  attribute_begin_ = number_begin_ + config_.max_count + 1;
  size_ = attribute_begin_ + num_attributes();
}

int TokenVocab::class_token(int cls) const {
  if (cls < 0 || cls >= num_classes()) {
    throw Error(ErrorCode::kVocabulary, "class index out of range: " + std::to_string(cls));
  }
  return class_begin_ + cls;
}

int TokenVocab::coord_token(int value) const {
  if (value < 0 || value > config_.grid_size) {
    throw Error(ErrorCode::kVocabulary, "coordinate out of range: " + std::to_string(value));
  }
  return coord_begin_ + value;
}

int TokenVocab::number_token(int value) const {
  if (value < 0 || value > config_.max_count) {
    throw Error(ErrorCode::kVocabulary, "number out of range: " + std::to_string(value));
  }
  return number_begin_ + value;
}

int TokenVocab::attribute_token(int attribute) const {
  if (attribute < 0 || attribute >= num_attributes()) {
    throw Error(ErrorCode::kVocabulary,
                "attribute index out of range: " + std::to_string(attribute));
  }
  return attribute_begin_ + attribute;
}

TokenType TokenVocab::type_of(int token) const {
  if (!contains(token)) {
    throw Error(ErrorCode::kVocabulary, "token out of vocabulary: " + std::to_string(token));
  }
  if (token < class_begin_) return TokenType::kMarker;
  if (token < coord_begin_) return TokenType::kClass;
  if (token < number_begin_) return TokenType::kCoord;
  if (token < attribute_begin_) return TokenType::kNumber;
  return TokenType::kAttribute;
}

int TokenVocab::value_of(int token) const {
  switch (type_of(token)) {
    case TokenType::kMarker:
      return token;
    case TokenType::kClass:
      return token - class_begin_;
    case TokenType::kCoord:
      return token - coord_begin_;
    case TokenType::kNumber:
      return token - number_begin_;
    case TokenType::kAttribute:
      return token - attribute_begin_;
  }
  return -1;
}

int TokenVocab::class_index(std::string_view name) const {
  for (int i = 0; i < num_classes(); ++i) {
    if (config_.classes[i] == name) return i;
  }
  return -1;
}

int TokenVocab::attribute_index(std::string_view name) const {
  for (int i = 0; i < num_attributes(); ++i) {
    if (config_.attributes[i] == name) return i;
  }
  return -1;
}

std::string TokenVocab::token_name(int token) const {
  const int v = value_of(token);
  switch (type_of(token)) {
    case TokenType::kMarker:
      return std::string("<") + step_kind_name(static_cast<StepKind>(v)) + ">";
    case TokenType::kClass:
      return config_.classes[v];
    case TokenType::kCoord:
      return "@" + std::to_string(v);
    case TokenType::kNumber:
      return "#" + std::to_string(v);
    case TokenType::kAttribute:
      return config_.attributes[v];
  }
  return "?";
}

std::vector<int> Trajectory::tokens() const {
  std::vector<int> out;
  for (const Step& s : steps) out.insert(out.end(), s.tokens.begin(), s.tokens.end());
  return out;
}

std::size_t token_count(const Trajectory& t) {
  std::size_t n = 0;
  for (const Step& s : t.steps) n += s.tokens.size();
  return n;
}

std::vector<std::size_t> step_offsets(const Trajectory& t) {
  std::vector<std::size_t> out;
  out.reserve(t.steps.size() + 1);
  std::size_t pos = 0;
  for (const Step& s : t.steps) {
    out.push_back(pos);
    pos += s.tokens.size();
  }
  out.push_back(pos);
  return out;
}

namespace {

[[noreturn]] void grammar_error(const std::string& what) {
  throw Error(ErrorCode::kVocabulary, "grammar violation: " + what);
}

Box box_from_coords(const TokenVocab& vocab, std::span<const int> coords) {
  return Box{vocab.value_of(coords[0]), vocab.value_of(coords[1]), vocab.value_of(coords[2]),
             vocab.value_of(coords[3])};
}

void append_range(std::vector<int>& out, int lo, int hi, int (TokenVocab::*fn)(int) const,
                  const TokenVocab& vocab) {
  for (int v = lo; v <= hi; ++v) out.push_back((vocab.*fn)(v));
}

}  // namespace

void StepParser::close_step(Claim claim) {
  steps_.push_back(Step{*open_kind_, std::move(open_tokens_), std::move(claim)});
  open_tokens_.clear();
  open_kind_.reset();
}

void StepParser::push(int token) {
  if (done()) grammar_error("token after answer");
  const TokenType type = vocab_->type_of(token);
  ++consumed_;
  if (!open_kind_) {
    if (type != TokenType::kMarker) grammar_error("step must start with a marker");
    open_kind_ = static_cast<StepKind>(token);
    open_tokens_ = {token};
    return;
  }
  const std::size_t n = open_tokens_.size();
  open_tokens_.push_back(token);
  switch (*open_kind_) {
    case StepKind::kPlan:
      if (type != TokenType::kClass) grammar_error("plan expects a class");
      close_step(std::monostate{});
      return;
    case StepKind::kEvidence:
      if (n == 1) {
        if (type != TokenType::kClass) grammar_error("evidence expects a class");
        return;
      }
      if (type != TokenType::kCoord) grammar_error("evidence expects coordinates");
      if (n == 5) {
        BoxClaim claim{vocab_->value_of(open_tokens_[1]),
                       box_from_coords(*vocab_, std::span(open_tokens_).subspan(2, 4))};
        close_step(claim);
      }
      return;
    case StepKind::kSynthesis:
      if (n == 1) {
        if (type == TokenType::kAttribute) {
          close_step(AttributeFact{vocab_->value_of(token)});
        } else if (type != TokenType::kClass) {
          grammar_error("synthesis expects a class or attribute");
        }
        return;
      }
      if (type != TokenType::kNumber) grammar_error("count fact expects a number");
      close_step(CountFact{vocab_->value_of(open_tokens_[1]), vocab_->value_of(token)});
      return;
    case StepKind::kAnswer:
      if (n == 1 && type == TokenType::kNumber) {
        answer_ = CountAnswer{vocab_->value_of(token)};
        close_step(std::monostate{});
        return;
      }
      if (type != TokenType::kCoord) grammar_error("answer expects a number or coordinates");
      if (n == 4) {
        answer_ = GroundingAnswer{box_from_coords(*vocab_, std::span(open_tokens_).subspan(1, 4))};
        close_step(std::monostate{});
      }
      return;
  }
}

std::vector<int> StepParser::legal_next(QueryKind query, int width, int height) const {
  std::vector<int> out;
  if (done()) return out;
  const TokenVocab& v = *vocab_;
  const int max_count = v.config().max_count;
  if (!open_kind_) {
    if (steps_.empty()) return {v.marker(StepKind::kPlan)};
    if (steps_.back().kind == StepKind::kSynthesis ||
        static_cast<int>(steps_.size()) >= v.config().max_steps - 1) {
      return {v.marker(StepKind::kAnswer)};
    }
    return {v.marker(StepKind::kEvidence), v.marker(StepKind::kSynthesis),
            v.marker(StepKind::kAnswer)};
  }
  const std::size_t n = open_tokens_.size();
  auto coord_slot = [&](std::size_t k) {
    // k indexes x0, y0, x1, y1 of a box whose first coordinate token sits
    // at open_tokens_[n - k].
    switch (k) {
      case 0:
        append_range(out, 0, width - 1, &TokenVocab::coord_token, v);
        break;
      case 1:
        append_range(out, 0, height - 1, &TokenVocab::coord_token, v);
        break;
      case 2:
        append_range(out, v.value_of(open_tokens_[n - 2]) + 1, width, &TokenVocab::coord_token, v);
        break;
      case 3:
        append_range(out, v.value_of(open_tokens_[n - 2]) + 1, height, &TokenVocab::coord_token, v);
        break;
    }
  };
  switch (*open_kind_) {
    case StepKind::kPlan:
      append_range(out, 0, v.num_classes() - 1, &TokenVocab::class_token, v);
      break;
    case StepKind::kEvidence:
      if (n == 1) {
        append_range(out, 0, v.num_classes() - 1, &TokenVocab::class_token, v);
      } else {
        coord_slot(n - 2);
      }
      break;
    case StepKind::kSynthesis:
      if (n == 1) {
        if (query == QueryKind::kCount) {
          append_range(out, 0, v.num_classes() - 1, &TokenVocab::class_token, v);
        } else {
          append_range(out, 0, v.num_attributes() - 1, &TokenVocab::attribute_token, v);
        }
      } else {
        append_range(out, 0, max_count, &TokenVocab::number_token, v);
      }
      break;
    case StepKind::kAnswer:
      if (n == 1 && query == QueryKind::kCount) {
        append_range(out, 0, max_count, &TokenVocab::number_token, v);
      } else {
        coord_slot(n - 1);
      }
      break;
  }
  return out;
}

Trajectory trajectory_from_tokens(const TokenVocab& vocab, std::string task_id,
                                  std::span<const int> tokens, std::vector<double> logprobs) {
  StepParser parser(vocab);
  for (int t : tokens) parser.push(t);
  Trajectory out;
  out.task_id = std::move(task_id);
  out.steps = parser.steps();
  if (!parser.at_step_boundary()) {
    const auto open = parser.open_tokens();
    out.steps.push_back(Step{*parser.open_kind(), {open.begin(), open.end()}, std::monostate{}});
  }
  out.token_logprobs = std::move(logprobs);
  out.final_answer = parser.answer();
  return out;
}

Step make_plan_step(const TokenVocab& vocab, int cls) {
  return Step{
      StepKind::kPlan, {vocab.marker(StepKind::kPlan), vocab.class_token(cls)}, std::monostate{}};
}

Step make_evidence_step(const TokenVocab& vocab, const BoxClaim& claim) {
  return Step{StepKind::kEvidence,
              {vocab.marker(StepKind::kEvidence), vocab.class_token(claim.cls),
               vocab.coord_token(claim.box.x_min), vocab.coord_token(claim.box.y_min),
               vocab.coord_token(claim.box.x_max), vocab.coord_token(claim.box.y_max)},
              claim};
}

Step make_count_fact_step(const TokenVocab& vocab, const CountFact& fact) {
  return Step{StepKind::kSynthesis,
              {vocab.marker(StepKind::kSynthesis), vocab.class_token(fact.cls),
               vocab.number_token(fact.count)},
              fact};
}

Step make_attribute_fact_step(const TokenVocab& vocab, const AttributeFact& fact) {
  return Step{StepKind::kSynthesis,
              {vocab.marker(StepKind::kSynthesis), vocab.attribute_token(fact.attribute)},
              fact};
}

Step make_answer_step(const TokenVocab& vocab, const Answer& answer) {
  Step s{StepKind::kAnswer, {vocab.marker(StepKind::kAnswer)}, std::monostate{}};
  if (const auto* c = std::get_if<CountAnswer>(&answer)) {
    s.tokens.push_back(vocab.number_token(c->value));
  } else if (const auto* g = std::get_if<GroundingAnswer>(&answer)) {
    s.tokens.push_back(vocab.coord_token(g->box.x_min));
    s.tokens.push_back(vocab.coord_token(g->box.y_min));
    s.tokens.push_back(vocab.coord_token(g->box.x_max));
    s.tokens.push_back(vocab.coord_token(g->box.y_max));
  } else {
    throw Error(ErrorCode::kInvalidArgument, "label answers have no token rendering");
  }
  return s;
}

const char* violation_name(Violation v) {
  switch (v) {
    case Violation::kAnswerNotFinal:
      return "AnswerNotFinal";
    case Violation::kLogprobLengthMismatch:
      return "LogprobLengthMismatch";
    case Violation::kPositiveLogprob:
      return "PositiveLogprob";
    case Violation::kOutcomeOutOfRange:
      return "OutcomeOutOfRange";
    case Violation::kUnknownToken:
      return "UnknownToken";
    case Violation::kUnknownClass:
      return "UnknownClass";
    case Violation::kInvalidBox:
      return "InvalidBox";
    case Violation::kClaimTokenMismatch:
      return "ClaimTokenMismatch";
    case Violation::kAnswerMismatch:
      return "AnswerMismatch";
  }
  return "?";
}

std::vector<Violation> validate_trajectory(const Trajectory& t, const TokenVocab& vocab) {
  std::vector<Violation> out;
  auto add = [&out](Violation v) {
    for (Violation seen : out) {
      if (seen == v) return;
    }
    out.push_back(v);
  };
  for (std::size_t i = 0; i < t.steps.size(); ++i) {
    const Step& s = t.steps[i];
    if (s.kind == StepKind::kAnswer && i + 1 != t.steps.size()) add(Violation::kAnswerNotFinal);
    bool tokens_ok = true;
    for (int tok : s.tokens) {
      if (!vocab.contains(tok)) {
        add(Violation::kUnknownToken);
        tokens_ok = false;
      }
    }
    if (const auto* b = std::get_if<BoxClaim>(&s.claim)) {
      if (b->cls < 0 || b->cls >= vocab.num_classes()) add(Violation::kUnknownClass);
      if (!has_positive_area(b->box)) add(Violation::kInvalidBox);
    }
    if (!tokens_ok || s.tokens.empty()) continue;
    // Tokens are authoritative; the structured claim must agree with them.
    try {
      StepParser p(vocab);
      for (int tok : s.tokens) p.push(tok);
      if (p.steps().size() != 1 || p.steps()[0].kind != s.kind || p.steps()[0].claim != s.claim) {
        add(Violation::kClaimTokenMismatch);
      } else if (s.kind == StepKind::kAnswer && t.final_answer && p.answer() != t.final_answer) {
        add(Violation::kAnswerMismatch);
      }
    } catch (const Error&) {
      add(Violation::kClaimTokenMismatch);
    }
  }
  if (t.token_logprobs.size() != token_count(t)) add(Violation::kLogprobLengthMismatch);
  for (double lp : t.token_logprobs) {
    if (!(lp <= 0.0)) {
      add(Violation::kPositiveLogprob);
      break;
    }
  }
  if (t.outcome_score && !(*t.outcome_score >= 0.0 && *t.outcome_score <= 1.0)) {
    add(Violation::kOutcomeOutOfRange);
  }
  return out;
}

}  // namespace treealign
