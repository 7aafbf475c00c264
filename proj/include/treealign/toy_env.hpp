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
#include <map>
#include <string>
#include <vector>

#include "treealign/box.hpp"
#include "treealign/trajectory.hpp"

namespace treealign {

inline constexpr const char* kColorKey = "color";

struct SceneObject {
  std::string cls;
  Box box;
  std::map<std::string, std::string> attributes;
  friend bool operator==(const SceneObject&, const SceneObject&) = default;
};

// Objects are kept in reading order: sorted by (y_min, x_min).
struct Scene {
  int width = 32;
  int height = 32;
  std::vector<SceneObject> objects;
  friend bool operator==(const Scene&, const Scene&) = default;
};

struct Query {
  QueryKind kind = QueryKind::kCount;
  std::string cls;
  // Attribute filter; only meaningful for grounding queries.
  std::map<std::string, std::string> filter;
  friend bool operator==(const Query&, const Query&) = default;
};

struct Task {
  std::string task_id;
  Scene scene;
  Query query;
  Answer gt_answer;
  friend bool operator==(const Task&, const Task&) = default;
};

struct GenerationConfig {
  int width = 32;
  int height = 32;
  int min_objects = 1;
  int max_objects = 8;
  int min_box = 2;
  int max_box = 8;
  double ground_fraction = 0.5;
  std::vector<std::string> classes{"plane", "ship", "storage-tank", "vehicle"};
  std::vector<std::string> colors{"red", "white", "gray", "blue"};
  friend bool operator==(const GenerationConfig&, const GenerationConfig&) = default;
};

// Deterministic in (seed, config). Task i draws from derive_seed(seed, i), so
// any partition of indices across workers reproduces the same list.
std::vector<Task> generate_tasks(std::uint64_t seed, int count, const GenerationConfig& config);

// Exact ground truth by scanning the scene. Throws kAmbiguousQuery when a
// grounding filter matches zero or several objects.
Answer oracle_answer(const Task& task);

// Indices of the objects of class `cls`, in reading order.
std::vector<std::size_t> objects_of_class(const Scene& scene, const std::string& cls);

// Continuous outcome score in [0, 1]:
//   count:  1 on exact match, else max(0, 1 - |pred - gt| / max(gt, 1))
//   ground: IoU(pred, gt)
// A missing answer or an answer of the wrong kind scores 0.
double outcome_score(const Trajectory& t, const Task& task);

// Binary correctness: exact count, or IoU >= 0.5 for grounding.
bool is_correct(const Trajectory& t, const Task& task);
bool is_correct_score(double outcome, QueryKind kind);

// Canonical correct reasoning chain: plan on the query class, cite the
// relevant objects in reading order, state the fact, answer.
Trajectory gold_trajectory(const Task& task, const TokenVocab& vocab);

// Index of the first step whose claim contradicts the scene, if any. A plan
// must name the query class; a box claim must exactly match an object of its
// class not cited earlier; a count fact must equal the true class count; an
// attribute fact must match the color of the most recently cited object; the
// answer must equal the ground truth. Steps without a claim never fail.
std::optional<std::size_t> first_inconsistent_step(const Task& task, const Trajectory& t,
                                                   const TokenVocab& vocab);

// Per-token 0/1 consistency: 1 through the marker of the first inconsistent
// step, 0 from its claim tokens onward.
std::vector<int> consistency_labels(const Task& task, const Trajectory& t, const TokenVocab& vocab);

// Labels that are 1 before the claim tokens of step `step` and 0 from there.
std::vector<int> labels_failing_at(const Trajectory& t, std::optional<std::size_t> step);

}  // namespace treealign
