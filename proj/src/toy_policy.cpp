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

#include "treealign/toy_policy.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace treealign {

const char* slot_name(Slot slot) {
  static constexpr const char* kNames[kNumSlots] = {
      "plan_marker",     "plan_class",       "step_marker",         "evidence_class",
      "evidence_x0",     "evidence_y0",      "evidence_x1",         "evidence_y1",
      "synthesis_class", "synthesis_number", "synthesis_attribute", "answer_number",
      "answer_x0",       "answer_y0",        "answer_x1",           "answer_y1"};
  return kNames[static_cast<int>(slot)];
}

StateLayout::StateLayout(const VocabConfig& vocab) {
  const int classes = static_cast<int>(vocab.classes.size());
  const int attrs = static_cast<int>(vocab.attributes.size());
  const int coords = vocab.grid_size + 2;  // 0..grid plus "no target"
  auto set = [this](Slot s, int n) { aux_size_[static_cast<int>(s)] = std::max(n, 1); };
  set(Slot::kPlanMarker, 1);
  set(Slot::kPlanClass, classes);
  set(Slot::kStepMarker, 8);
  set(Slot::kEvidenceClass, classes);
  set(Slot::kEvidenceX0, coords);
  set(Slot::kEvidenceY0, coords);
  set(Slot::kEvidenceX1, coords);
  set(Slot::kEvidenceY1, coords);
  set(Slot::kSynthesisClass, classes);
  set(Slot::kSynthesisNumber, vocab.max_count + 1);
  set(Slot::kSynthesisAttribute, attrs + 1);
  set(Slot::kAnswerNumber, vocab.max_count + 2);
  set(Slot::kAnswerX0, coords);
  set(Slot::kAnswerY0, coords);
  set(Slot::kAnswerX1, coords);
  set(Slot::kAnswerY1, coords);
  int offset = 0;
  for (int s = 0; s < kNumSlots; ++s) {
    offset_[s] = offset;
    offset += 2 * aux_size_[s];
  }
  num_states_ = offset;
}

int StateLayout::index(Slot slot, QueryKind kind, int aux) const {
  const int s = static_cast<int>(slot);
  if (aux < 0 || aux >= aux_size_[s]) {
    throw Error(ErrorCode::kInvalidArgument,
                std::string("aux feature out of range for slot ") + slot_name(slot));
  }
  return offset_[s] + static_cast<int>(kind) * aux_size_[s] + aux;
}

ToyContext::ToyContext(const TokenVocab& vocab, const Task& task)
    : vocab_(&vocab), task_(&task), parser_(vocab) {
  query_class_ = vocab.class_index(task.query.cls);
  const auto& objects = task.scene.objects;
  object_class_.reserve(objects.size());
  object_color_.reserve(objects.size());
  for (const SceneObject& o : objects) {
    object_class_.push_back(vocab.class_index(o.cls));
    auto it = o.attributes.find(kColorKey);
    object_color_.push_back(it == o.attributes.end() ? -1 : vocab.attribute_index(it->second));
  }
  cited_.assign(objects.size(), 0);
  evidence_per_class_.assign(static_cast<std::size_t>(vocab.num_classes()), 0);
  if (task.query.kind == QueryKind::kGround) {
    if (const auto* g = std::get_if<GroundingAnswer>(&task.gt_answer)) {
      for (std::size_t i = 0; i < objects.size(); ++i) {
        if (objects[i].box == g->box) target_ = static_cast<int>(i);
      }
    }
  }
}

void ToyContext::push(int token) {
  const std::size_t before = parser_.steps().size();
  parser_.push(token);
  if (parser_.steps().size() == before) return;
  const Step& step = parser_.steps().back();
  switch (step.kind) {
    case StepKind::kPlan:
      plan_class_ = vocab_->value_of(step.tokens[1]);
      break;
    case StepKind::kEvidence: {
      const auto& claim = std::get<BoxClaim>(step.claim);
      ++evidence_steps_;
      ++evidence_per_class_[static_cast<std::size_t>(claim.cls)];
      last_evidence_box_ = claim.box;
      last_cited_ = -1;
      for (std::size_t i = 0; i < cited_.size(); ++i) {
        if (!cited_[i] && object_class_[i] == claim.cls &&
            task_->scene.objects[i].box == claim.box) {
          cited_[i] = 1;
          last_cited_ = static_cast<int>(i);
          break;
        }
      }
      break;
    }
    case StepKind::kSynthesis:
      if (const auto* f = std::get_if<CountFact>(&step.claim)) last_synth_count_ = f->count;
      break;
    case StepKind::kAnswer:
      break;
  }
}

std::vector<int> ToyContext::legal() const {
  const int grid = vocab_->config().grid_size;
  return parser_.legal_next(task_->query.kind, std::min(task_->scene.width, grid),
                            std::min(task_->scene.height, grid));
}

int ToyContext::first_uncited(int cls) const {
  for (std::size_t i = 0; i < cited_.size(); ++i) {
    if (!cited_[i] && object_class_[i] == cls) return static_cast<int>(i);
  }
  return -1;
}

bool ToyContext::remaining() const {
  if (task_->query.kind == QueryKind::kGround) return target_ >= 0 && !cited_[target_];
  return plan_class_ >= 0 && first_uncited(plan_class_) >= 0;
}

namespace {

int box_coord(const Box& b, int k) {
  switch (k) {
    case 0:
      return b.x_min;
    case 1:
      return b.y_min;
    case 2:
      return b.x_max;
    default:
      return b.y_max;
  }
}

Slot evidence_coord_slot(int k) {
  return static_cast<Slot>(static_cast<int>(Slot::kEvidenceX0) + k);
}
Slot answer_coord_slot(int k) { return static_cast<Slot>(static_cast<int>(Slot::kAnswerX0) + k); }

}  // namespace

std::pair<Slot, int> ToyContext::feature() const {
  const int grid = vocab_->config().grid_size;
  const int none_coord = grid + 1;
  const int max_count = vocab_->config().max_count;
  const int plan = std::max(plan_class_, 0);
  if (parser_.at_step_boundary()) {
    if (parser_.steps().empty()) return {Slot::kPlanMarker, 0};
    return {Slot::kStepMarker, (remaining() ? 4 : 0) + std::min(evidence_steps_, 3)};
  }
  const auto open = parser_.open_tokens();
  const int n = static_cast<int>(open.size());
  switch (*parser_.open_kind()) {
    case StepKind::kPlan:
      return {Slot::kPlanClass, std::max(query_class_, 0)};
    case StepKind::kEvidence: {
      if (n == 1) return {Slot::kEvidenceClass, plan};
      const int k = n - 2;
      const int target = first_uncited(vocab_->value_of(open[1]));
      const int aux =
          target < 0 ? none_coord : std::min(box_coord(task_->scene.objects[target].box, k), grid);
      return {evidence_coord_slot(k), aux};
    }
    case StepKind::kSynthesis:
      if (n == 1) {
        if (task_->query.kind == QueryKind::kCount) return {Slot::kSynthesisClass, plan};
        const int attrs = vocab_->num_attributes();
        const int color = last_cited_ >= 0 ? object_color_[last_cited_] : -1;
        return {Slot::kSynthesisAttribute, color < 0 ? attrs : color};
      }
      return {Slot::kSynthesisNumber,
              std::min(evidence_per_class_[vocab_->value_of(open[1])], max_count)};
    case StepKind::kAnswer:
      if (n == 1 && task_->query.kind == QueryKind::kCount) {
        return {Slot::kAnswerNumber,
                last_synth_count_ < 0 ? max_count + 1 : std::min(last_synth_count_, max_count)};
      }
      {
        const int k = n - 1;
        const int aux =
            last_evidence_box_ ? std::min(box_coord(*last_evidence_box_, k), grid) : none_coord;
        return {answer_coord_slot(k), aux};
      }
  }
  return {Slot::kPlanMarker, 0};
}

namespace {

class ToySession : public PolicySession {
 public:
  ToySession(const ToySoftmaxPolicy& policy, const Task& task)
      : policy_(&policy), task_(&task), ctx_(policy.vocab(), task) {}

  std::vector<double> distribution() override { return policy_->distribution(*task_, ctx_); }
  void push(int token) override { ctx_.push(token); }
  std::unique_ptr<PolicySession> clone() const override {
    return std::make_unique<ToySession>(*this);
  }

 private:
  const ToySoftmaxPolicy* policy_;
  const Task* task_;
  ToyContext ctx_;
};

}  // namespace

ToySoftmaxPolicy::ToySoftmaxPolicy(TokenVocab vocab)
    : vocab_(std::move(vocab)), layout_(vocab_.config()) {
  theta_.assign(static_cast<std::size_t>(layout_.num_states()) * vocab_.size(), 0.0);
}

ToySoftmaxPolicy::ToySoftmaxPolicy(TokenVocab vocab, std::vector<double> theta)
    : vocab_(std::move(vocab)), layout_(vocab_.config()), theta_(std::move(theta)) {
  const std::size_t expected = static_cast<std::size_t>(layout_.num_states()) * vocab_.size();
  if (theta_.size() != expected) {
    throw Error(ErrorCode::kInvalidArgument, "policy parameter vector has " +
                                                 std::to_string(theta_.size()) +
                                                 " entries, expected " + std::to_string(expected));
  }
}

std::vector<double> ToySoftmaxPolicy::distribution(const Task& task, const ToyContext& ctx,
                                                   int* state) const {
  (void)task;
  if (ctx.done()) throw Error(ErrorCode::kInvalidArgument, "distribution requested after answer");
  const std::vector<int> legal = ctx.legal();
  if (legal.empty()) throw Error(ErrorCode::kDegenerateTask, "no legal actions");
  const auto [slot, aux] = ctx.feature();
  const int s = layout_.index(slot, task.query.kind, aux);
  if (state != nullptr) *state = s;
  const double* row = theta_.data() + static_cast<std::size_t>(s) * vocab_.size();
  double max_logit = -INFINITY;
  for (int v : legal) max_logit = std::max(max_logit, row[v]);
  std::vector<double> probs(static_cast<std::size_t>(vocab_.size()), 0.0);
  double z = 0.0;
  for (int v : legal) {
    probs[v] = std::exp(row[v] - max_logit);
    z += probs[v];
  }
  for (int v : legal) probs[v] /= z;
  return probs;
}

std::vector<double> ToySoftmaxPolicy::next_distribution(const Task& task,
                                                        std::span<const int> prefix) const {
  ToyContext ctx(vocab_, task);
  for (int t : prefix) ctx.push(t);
  return distribution(task, ctx);
}

std::unique_ptr<PolicySession> ToySoftmaxPolicy::open(const Task& task) const {
  return std::make_unique<ToySession>(*this, task);
}

double ToySoftmaxPolicy::slice_logprob(const Task& task, std::span<const int> tokens,
                                       std::size_t begin, std::size_t end, std::span<double> grad,
                                       double weight) const {
  if (end > tokens.size() || begin > end) {
    throw Error(ErrorCode::kInvalidArgument, "slice_logprob: bad range");
  }
  ToyContext ctx(vocab_, task);
  double total = 0.0;
  const auto v_size = static_cast<std::size_t>(vocab_.size());
  for (std::size_t i = 0; i < end; ++i) {
    const int tok = tokens[i];
    if (!vocab_.contains(tok)) {
      throw Error(ErrorCode::kVocabulary, "token out of vocabulary: " + std::to_string(tok));
    }
    if (i >= begin) {
      int s = 0;
      const std::vector<double> probs = distribution(task, ctx, &s);
      total += std::log(probs[tok]);
      if (!grad.empty()) {
        double* g = grad.data() + static_cast<std::size_t>(s) * v_size;
        for (std::size_t v = 0; v < v_size; ++v) g[v] -= weight * probs[v];
        g[tok] += weight;
      }
    }
    ctx.push(tok);
  }
  return total;
}

std::vector<double> ToySoftmaxPolicy::grad_logprob(const Task& task, const Trajectory& t) const {
  std::vector<double> grad(theta_.size(), 0.0);
  const std::vector<int> tokens = t.tokens();
  slice_logprob(task, tokens, 0, tokens.size(), grad);
  return grad;
}

double sft_loss(const ToySoftmaxPolicy& policy, const std::vector<Task>& tasks,
                const std::vector<Trajectory>& targets, std::span<double> grad) {
  if (tasks.size() != targets.size() || targets.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "sft_loss: tasks and targets must pair up");
  }
  const double scale = 1.0 / static_cast<double>(targets.size());
  double loss = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const std::vector<int> tokens = targets[i].tokens();
    loss -= scale * policy.slice_logprob(tasks[i], tokens, 0, tokens.size(), grad, -scale);
  }
  return loss;
}

SftReport sft_train(ToySoftmaxPolicy& policy, const std::vector<Task>& tasks,
                    const std::vector<Trajectory>& targets, int steps, double lr) {
  SftReport report;
  std::vector<double> grad(policy.num_parameters());
  auto theta = policy.mutable_parameters();
  for (int step = 0; step < steps; ++step) {
    std::fill(grad.begin(), grad.end(), 0.0);
    report.losses.push_back(sft_loss(policy, tasks, targets, grad));
    for (std::size_t i = 0; i < theta.size(); ++i) theta[i] -= lr * grad[i];
  }
  report.losses.push_back(sft_loss(policy, tasks, targets));
  return report;
}

}  // namespace treealign
