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

#include "treealign/injector.hpp"

#include <algorithm>
#include <cmath>

namespace treealign {
namespace {

constexpr int kSmallAttempts = 1000;
const char* const kMixKeys[] = {"anchor", "small", "large", "tamper"};

std::vector<std::size_t> steps_with_box(const Trajectory& t) {
  std::vector<std::size_t> out;
  for (std::size_t s = 0; s < t.steps.size(); ++s) {
    if (t.steps[s].kind == StepKind::kEvidence &&
        std::holds_alternative<BoxClaim>(t.steps[s].claim)) {
      out.push_back(s);
    }
  }
  return out;
}

std::vector<std::size_t> steps_with_fact(const Trajectory& t) {
  std::vector<std::size_t> out;
  for (std::size_t s = 0; s < t.steps.size(); ++s) {
    const Claim& c = t.steps[s].claim;
    if (std::holds_alternative<CountFact>(c) || std::holds_alternative<AttributeFact>(c)) {
      out.push_back(s);
    }
  }
  return out;
}

bool in_band(double v, double lo, double hi) { return v >= lo && v <= hi; }

bool collides_same_class(const Box& b, int cls, const Task& task, const TokenVocab& vocab) {
  for (const SceneObject& o : task.scene.objects) {
    if (o.box == b && vocab.class_index(o.cls) == cls) return true;
  }
  return false;
}

Box small_jitter(const Box& orig, int cls, const Task& task, const TokenVocab& vocab,
                 const PerturbationSpec& spec, Rng& rng) {
  const int W = task.scene.width;
  const int H = task.scene.height;
  auto acceptable = [&](const Box& b) {
    return has_positive_area(b) && within_bounds(b, W, H) &&
           in_band(compute_iou(b, orig), spec.small_lo, spec.small_hi) &&
           !collides_same_class(b, cls, task, vocab);
  };
  const int w = orig.width();
  const int h = orig.height();
  for (int attempt = 0; attempt < kSmallAttempts; ++attempt) {
    const int dx = rng.uniform_int(-w, w);
    const int dy = rng.uniform_int(-h, h);
    const int nw = std::max(1, w + rng.uniform_int(-2, 2));
    const int nh = std::max(1, h + rng.uniform_int(-2, 2));
    const Box b{orig.x_min + dx, orig.y_min + dy, orig.x_min + dx + nw, orig.y_min + dy + nh};
    if (acceptable(b)) return b;
  }
  // Exhaustive fallback over every box in the scene.
  std::vector<Box> all;
  for (int x0 = 0; x0 < W; ++x0) {
    for (int y0 = 0; y0 < H; ++y0) {
      for (int x1 = x0 + 1; x1 <= W; ++x1) {
        for (int y1 = y0 + 1; y1 <= H; ++y1) {
          const Box b{x0, y0, x1, y1};
          if (intersection_area(b, orig) > 0 && acceptable(b)) all.push_back(b);
        }
      }
    }
  }
  if (all.empty()) {
    throw Error(ErrorCode::kNothingToPerturb, "no box within the jitter IoU band");
  }
  return all[rng.below(all.size())];
}

Box large_jitter(const Box& orig, const Task& task, const PerturbationSpec& spec, Rng& rng) {
  const int W = task.scene.width;
  const int H = task.scene.height;
  const int w = orig.width();
  const int h = orig.height();
  for (int attempt = 0; attempt < spec.large_attempts; ++attempt) {
    const int x = rng.uniform_int(0, W - w);
    const int y = rng.uniform_int(0, H - h);
    const Box b{x, y, x + w, y + h};
    bool clear = true;
    for (const SceneObject& o : task.scene.objects) {
      if (intersection_area(b, o.box) > 0) {
        clear = false;
        break;
      }
    }
    if (clear) return b;
  }
  throw Error(ErrorCode::kNoBackgroundRegion,
              "no background placement found for task " + task.task_id);
}

LabeledSample finish(Trajectory t, std::size_t step, const char* detail) {
  LabeledSample s;
  s.labels = labels_failing_at(t, step);
  s.mask = reasoning_mask(t.tokens());
  s.trajectory = std::move(t);
  s.source = SampleSource::kInjected;
  s.detail = detail;
  return s;
}

}  // namespace

const char* perturbation_name(PerturbationKind kind) {
  switch (kind) {
    case PerturbationKind::kSmallJitter:
      return "small";
    case PerturbationKind::kLargeJitter:
      return "large";
    case PerturbationKind::kTamper:
      return "tamper";
  }
  return "?";
}

void validate_perturbation_spec(const PerturbationSpec& spec) {
  if (!(spec.small_lo > 0.0 && spec.small_lo < spec.small_hi && spec.small_hi < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "small jitter band must satisfy 0 < lo < hi < 1");
  }
  if (spec.large_attempts < 1) {
    throw Error(ErrorCode::kInvalidArgument, "large_attempts must be >= 1");
  }
  double total = 0.0;
  for (const auto& [key, w] : spec.ratio) {
    if (std::find(std::begin(kMixKeys), std::end(kMixKeys), key) == std::end(kMixKeys)) {
      throw Error(ErrorCode::kInvalidArgument, "unknown mix key: " + key);
    }
    if (!(w >= 0.0) || !std::isfinite(w)) {
      throw Error(ErrorCode::kInvalidArgument, "mix weights must be finite and >= 0");
    }
    total += w;
  }
  if (!(total > 0.0)) throw Error(ErrorCode::kInvalidArgument, "mix weights sum to zero");
}

LabeledSample inject_box(const Trajectory& t, const Task& task, const TokenVocab& vocab,
                         PerturbationKind kind, std::uint64_t seed, const PerturbationSpec& spec) {
  if (kind == PerturbationKind::kTamper) {
    throw Error(ErrorCode::kInvalidArgument, "inject_box takes a jitter kind");
  }
  const std::vector<std::size_t> candidates = steps_with_box(t);
  if (candidates.empty()) {
    throw Error(ErrorCode::kNothingToPerturb, "trajectory has no box claim: " + t.task_id);
  }
  Rng rng(seed);
  const std::size_t step = candidates[rng.below(candidates.size())];
  const BoxClaim orig = std::get<BoxClaim>(t.steps[step].claim);
  const Box moved = kind == PerturbationKind::kSmallJitter
                        ? small_jitter(orig.box, orig.cls, task, vocab, spec, rng)
                        : large_jitter(orig.box, task, spec, rng);
  Trajectory out = t;
  out.steps[step] = make_evidence_step(vocab, BoxClaim{orig.cls, moved});
  return finish(std::move(out), step, perturbation_name(kind));
}

LabeledSample inject_fact(const Trajectory& t, const Task& /*task*/, const TokenVocab& vocab,
                          std::uint64_t seed) {
  const std::vector<std::size_t> candidates = steps_with_fact(t);
  if (candidates.empty()) {
    throw Error(ErrorCode::kNothingToPerturb, "trajectory has no fact claim: " + t.task_id);
  }
  Rng rng(seed);
  const std::size_t step = candidates[rng.below(candidates.size())];
  Trajectory out = t;
  if (const auto* c = std::get_if<CountFact>(&t.steps[step].claim)) {
    const int hi = std::min(c->count + 3, vocab.config().max_count);
    std::vector<int> options;
    for (int k = 0; k <= hi; ++k) {
      if (k != c->count) options.push_back(k);
    }
    const int k = options[rng.below(options.size())];
    out.steps[step] = make_count_fact_step(vocab, CountFact{c->cls, k});
  } else {
    const int a = std::get<AttributeFact>(t.steps[step].claim).attribute;
    const int n = vocab.num_attributes();
    if (n < 2) throw Error(ErrorCode::kNothingToPerturb, "vocabulary has a single attribute");
    int other = rng.uniform_int(0, n - 2);
    if (other >= a) ++other;
    out.steps[step] = make_attribute_fact_step(vocab, AttributeFact{other});
  }
  return finish(std::move(out), step, perturbation_name(PerturbationKind::kTamper));
}

LabeledSample make_anchor(const Trajectory& t) {
  LabeledSample s;
  s.labels.assign(token_count(t), 1);
  s.mask = reasoning_mask(t.tokens());
  s.trajectory = t;
  s.source = SampleSource::kAnchor;
  s.detail = "anchor";
  return s;
}

std::vector<std::size_t> apportion(std::size_t n, const std::vector<double>& weights) {
  double total = 0.0;
  for (double w : weights) total += w;
  std::vector<std::size_t> counts(weights.size(), 0);
  if (!(total > 0.0)) return counts;
  std::vector<std::pair<double, std::size_t>> rema;
  std::size_t used = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double exact = static_cast<double>(n) * weights[i] / total;
    counts[i] = static_cast<std::size_t>(std::floor(exact));
    used += counts[i];
    rema.emplace_back(exact - std::floor(exact), i);
  }
  std::stable_sort(rema.begin(), rema.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t k = 0; used < n && k < rema.size(); ++k, ++used) ++counts[rema[k].second];
  return counts;
}

InjectionResult build_injection_set(const std::vector<Trajectory>& gold,
                                    const std::vector<Task>& tasks, const TokenVocab& vocab,
                                    const PerturbationSpec& spec) {
  validate_perturbation_spec(spec);
  if (gold.size() != tasks.size()) {
    throw Error(ErrorCode::kInvalidArgument, "gold and task lists differ in length");
  }
  std::vector<double> weights;
  for (const char* key : kMixKeys) {
    auto it = spec.ratio.find(key);
    weights.push_back(it == spec.ratio.end() ? 0.0 : it->second);
  }
  const std::vector<std::size_t> counts = apportion(gold.size(), weights);
  InjectionResult result;
  std::vector<int> kinds;
  for (std::size_t k = 0; k < counts.size(); ++k) {
    result.planned[kMixKeys[k]] = counts[k];
    kinds.insert(kinds.end(), counts[k], static_cast<int>(k));
  }
  Rng shuffle_rng(derive_seed(spec.seed, 0x5348554646ULL));
  for (std::size_t i = kinds.size(); i > 1; --i) {
    std::swap(kinds[i - 1], kinds[shuffle_rng.below(i)]);
  }
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const std::uint64_t seed = derive_seed(spec.seed, i);
    try {
      switch (kinds[i]) {
        case 0:
          result.samples.push_back(make_anchor(gold[i]));
          break;
        case 1:
          result.samples.push_back(
              inject_box(gold[i], tasks[i], vocab, PerturbationKind::kSmallJitter, seed, spec));
          break;
        case 2:
          result.samples.push_back(
              inject_box(gold[i], tasks[i], vocab, PerturbationKind::kLargeJitter, seed, spec));
          break;
        default:
          result.samples.push_back(inject_fact(gold[i], tasks[i], vocab, seed));
          break;
      }
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kNothingToPerturb && e.code() != ErrorCode::kNoBackgroundRegion) {
        throw;
      }
      result.skipped.push_back({i, gold[i].task_id, kMixKeys[kinds[i]], error_code_name(e.code())});
    }
  }
  return result;
}

}  // namespace treealign
