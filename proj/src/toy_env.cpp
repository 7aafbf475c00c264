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

#include "treealign/toy_env.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "treealign/common.hpp"

namespace treealign {
namespace {

constexpr int kPlacementAttempts = 200;

std::string task_name(std::uint64_t seed, int index) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "s%llu-%06d", static_cast<unsigned long long>(seed), index);
  return buf;
}

bool overlaps_any(const Box& b, const std::vector<SceneObject>& objects) {
  for (const SceneObject& o : objects) {
    if (intersection_area(b, o.box) > 0) return true;
  }
  return false;
}

Task make_task(std::uint64_t seed, int index, const GenerationConfig& cfg) {
  Rng rng(derive_seed(seed, static_cast<std::uint64_t>(index)));
  Task task;
  task.task_id = task_name(seed, index);
  task.scene.width = cfg.width;
  task.scene.height = cfg.height;

  const int n =
      cfg.max_objects <= 0 ? 0 : rng.uniform_int(std::max(cfg.min_objects, 0), cfg.max_objects);
  const int max_w = std::min(cfg.max_box, cfg.width);
  const int max_h = std::min(cfg.max_box, cfg.height);
  const int min_side = std::clamp(cfg.min_box, 1, std::min(max_w, max_h));
  for (int k = 0; k < n; ++k) {
    for (int attempt = 0; attempt < kPlacementAttempts; ++attempt) {
      const int w = rng.uniform_int(min_side, max_w);
      const int h = rng.uniform_int(min_side, max_h);
      const int x = rng.uniform_int(0, cfg.width - w);
      const int y = rng.uniform_int(0, cfg.height - h);
      const Box b{x, y, x + w, y + h};
      if (overlaps_any(b, task.scene.objects)) continue;
      SceneObject obj;
      obj.cls = cfg.classes[rng.below(cfg.classes.size())];
      obj.box = b;
      obj.attributes[kColorKey] = cfg.colors[rng.below(cfg.colors.size())];
      task.scene.objects.push_back(std::move(obj));
      break;
    }
  }
  std::sort(task.scene.objects.begin(), task.scene.objects.end(),
            [](const SceneObject& a, const SceneObject& b) {
              if (a.box.y_min != b.box.y_min) return a.box.y_min < b.box.y_min;
              return a.box.x_min < b.box.x_min;
            });

  auto& objects = task.scene.objects;
  const bool ground = !objects.empty() && rng.uniform() < cfg.ground_fraction;
  if (ground) {
    auto is_unique = [&](std::size_t i) {
      for (std::size_t j = 0; j < objects.size(); ++j) {
        if (j != i && objects[j].cls == objects[i].cls &&
            objects[j].attributes.at(kColorKey) == objects[i].attributes.at(kColorKey)) {
          return false;
        }
      }
      return true;
    };
    std::size_t target = rng.below(objects.size());
    if (!is_unique(target)) {
      // Recolor the target with a color no same-class peer uses, if any.
      std::vector<std::string> free_colors;
      for (const std::string& c : cfg.colors) {
        bool used = false;
        for (std::size_t j = 0; j < objects.size(); ++j) {
          if (j != target && objects[j].cls == objects[target].cls &&
              objects[j].attributes.at(kColorKey) == c) {
            used = true;
          }
        }
        if (!used) free_colors.push_back(c);
      }
      if (!free_colors.empty()) {
        objects[target].attributes[kColorKey] = free_colors[rng.below(free_colors.size())];
      }
    }
    if (is_unique(target)) {
      task.query.kind = QueryKind::kGround;
      task.query.cls = objects[target].cls;
      task.query.filter[kColorKey] = objects[target].attributes.at(kColorKey);
      task.gt_answer = GroundingAnswer{objects[target].box};
      return task;
    }
  }
  task.query.kind = QueryKind::kCount;
  task.query.cls = cfg.classes[rng.below(cfg.classes.size())];
  task.gt_answer = oracle_answer(task);
  return task;
}

}  // namespace

std::vector<Task> generate_tasks(std::uint64_t seed, int count, const GenerationConfig& config) {
  if (config.classes.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "generate_tasks: config has zero object classes");
  }
  if (config.colors.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "generate_tasks: config has zero colors");
  }
  if (count < 1) throw Error(ErrorCode::kInvalidArgument, "generate_tasks: count must be >= 1");
  if (config.width < 4 || config.height < 4) {
    throw Error(ErrorCode::kInvalidArgument, "generate_tasks: grid must be at least 4x4");
  }
  std::vector<Task> tasks;
  tasks.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) tasks.push_back(make_task(seed, i, config));
  return tasks;
}

std::vector<std::size_t> objects_of_class(const Scene& scene, const std::string& cls) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < scene.objects.size(); ++i) {
    if (scene.objects[i].cls == cls) out.push_back(i);
  }
  return out;
}

Answer oracle_answer(const Task& task) {
  if (task.query.kind == QueryKind::kCount) {
    return CountAnswer{static_cast<int>(objects_of_class(task.scene, task.query.cls).size())};
  }
  const SceneObject* match = nullptr;
  int matches = 0;
  for (const SceneObject& o : task.scene.objects) {
    if (o.cls != task.query.cls) continue;
    bool ok = true;
    for (const auto& [key, value] : task.query.filter) {
      auto it = o.attributes.find(key);
      if (it == o.attributes.end() || it->second != value) ok = false;
    }
    if (ok) {
      ++matches;
      match = &o;
    }
  }
  if (matches != 1) {
    throw Error(ErrorCode::kAmbiguousQuery, "grounding query for task " + task.task_id +
                                                " matches " + std::to_string(matches) + " objects");
  }
  return GroundingAnswer{match->box};
}

double outcome_score(const Trajectory& t, const Task& task) {
  if (!t.final_answer) return 0.0;
  if (task.query.kind == QueryKind::kCount) {
    const auto* pred = std::get_if<CountAnswer>(&*t.final_answer);
    const auto* gt = std::get_if<CountAnswer>(&task.gt_answer);
    if (pred == nullptr || gt == nullptr) return 0.0;
    if (pred->value == gt->value) return 1.0;
    const double diff = std::abs(pred->value - gt->value);
    return std::max(0.0, 1.0 - diff / std::max(gt->value, 1));
  }
  const auto* pred = std::get_if<GroundingAnswer>(&*t.final_answer);
  const auto* gt = std::get_if<GroundingAnswer>(&task.gt_answer);
  if (pred == nullptr || gt == nullptr || !has_positive_area(pred->box)) return 0.0;
  return compute_iou(pred->box, gt->box);
}

bool is_correct_score(double outcome, QueryKind kind) {
  return kind == QueryKind::kCount ? outcome == 1.0 : outcome >= 0.5;
}

bool is_correct(const Trajectory& t, const Task& task) {
  return is_correct_score(outcome_score(t, task), task.query.kind);
}

Trajectory gold_trajectory(const Task& task, const TokenVocab& vocab) {
  const int q = vocab.class_index(task.query.cls);
  if (q < 0)
    throw Error(ErrorCode::kVocabulary, "query class not in vocabulary: " + task.query.cls);
  Trajectory t;
  t.task_id = task.task_id;
  t.steps.push_back(make_plan_step(vocab, q));
  const auto members = objects_of_class(task.scene, task.query.cls);
  if (task.query.kind == QueryKind::kCount) {
    for (std::size_t i : members) {
      t.steps.push_back(make_evidence_step(vocab, BoxClaim{q, task.scene.objects[i].box}));
    }
    const int n = static_cast<int>(members.size());
    t.steps.push_back(make_count_fact_step(vocab, CountFact{q, n}));
    t.steps.push_back(make_answer_step(vocab, CountAnswer{n}));
    t.final_answer = CountAnswer{n};
  } else {
    const Box target = std::get<GroundingAnswer>(task.gt_answer).box;
    int color = -1;
    for (std::size_t i : members) {
      const SceneObject& o = task.scene.objects[i];
      t.steps.push_back(make_evidence_step(vocab, BoxClaim{q, o.box}));
      if (o.box == target) {
        color = vocab.attribute_index(o.attributes.at(kColorKey));
        break;
      }
    }
    if (color < 0) throw Error(ErrorCode::kVocabulary, "target color not in vocabulary");
    t.steps.push_back(make_attribute_fact_step(vocab, AttributeFact{color}));
    t.steps.push_back(make_answer_step(vocab, GroundingAnswer{target}));
    t.final_answer = GroundingAnswer{target};
  }
  t.token_logprobs.assign(token_count(t), 0.0);
  t.outcome_score = 1.0;
  return t;
}

std::optional<std::size_t> first_inconsistent_step(const Task& task, const Trajectory& t,
                                                   const TokenVocab& vocab) {
  const int query_class = vocab.class_index(task.query.cls);
  std::vector<char> cited(task.scene.objects.size(), 0);
  int last_cited = -1;
  for (std::size_t s = 0; s < t.steps.size(); ++s) {
    const Step& step = t.steps[s];
    if (step.kind == StepKind::kPlan) {
      if (step.tokens.size() == 2 && vocab.value_of(step.tokens[1]) != query_class) return s;
      continue;
    }
    if (step.kind == StepKind::kAnswer) {
      if (t.final_answer && s + 1 == t.steps.size() && !(*t.final_answer == task.gt_answer)) {
        return s;
      }
      continue;
    }
    if (const auto* b = std::get_if<BoxClaim>(&step.claim)) {
      int hit = -1;
      for (std::size_t i = 0; i < task.scene.objects.size(); ++i) {
        const SceneObject& o = task.scene.objects[i];
        if (!cited[i] && o.box == b->box && vocab.class_index(o.cls) == b->cls) {
          hit = static_cast<int>(i);
          break;
        }
      }
      if (hit < 0) return s;
      cited[static_cast<std::size_t>(hit)] = 1;
      last_cited = hit;
    } else if (const auto* c = std::get_if<CountFact>(&step.claim)) {
      const auto n =
          objects_of_class(task.scene, vocab.config().classes[static_cast<std::size_t>(c->cls)]);
      if (static_cast<int>(n.size()) != c->count) return s;
    } else if (const auto* a = std::get_if<AttributeFact>(&step.claim)) {
      if (last_cited < 0) return s;
      const auto& attrs = task.scene.objects[static_cast<std::size_t>(last_cited)].attributes;
      const auto it = attrs.find(kColorKey);
      if (it == attrs.end() || vocab.attribute_index(it->second) != a->attribute) return s;
    }
  }
  return std::nullopt;
}

std::vector<int> labels_failing_at(const Trajectory& t, std::optional<std::size_t> step) {
  const auto offsets = step_offsets(t);
  std::vector<int> labels(offsets.back(), 1);
  if (step) {
    for (std::size_t i = offsets[*step] + 1; i < labels.size(); ++i) labels[i] = 0;
  }
  return labels;
}

std::vector<int> consistency_labels(const Task& task, const Trajectory& t,
                                    const TokenVocab& vocab) {
  return labels_failing_at(t, first_inconsistent_step(task, t, vocab));
}

}  // namespace treealign
