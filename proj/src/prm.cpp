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

#include "treealign/prm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <unordered_map>

namespace treealign {
namespace {

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

int iou_bucket(double iou) {
  if (iou >= 1.0) return 0;
  if (iou >= 0.5) return 1;
  if (iou >= 0.1) return 2;
  if (iou > 0.0) return 3;
  return 4;
}

int delta_bucket(int delta) { return std::min(std::abs(delta), 3); }

const Task& find_task(const std::unordered_map<std::string, const Task*>& by_id,
                      const std::string& id) {
  auto it = by_id.find(id);
  if (it == by_id.end()) throw Error(ErrorCode::kNotFound, "no task for sample " + id);
  return *it->second;
}

std::unordered_map<std::string, const Task*> index_tasks(const std::vector<Task>& tasks) {
  std::unordered_map<std::string, const Task*> by_id;
  for (const Task& t : tasks) by_id.emplace(t.task_id, &t);
  return by_id;
}

}  // namespace

std::vector<double> pool_steps(const Trajectory& t, std::span<const double> token_scores,
                               StepPooling pooling) {
  const auto offsets = step_offsets(t);
  std::vector<double> out;
  out.reserve(t.steps.size());
  for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
    const std::size_t b = offsets[s];
    const std::size_t e = offsets[s + 1];
    if (b == e) {
      out.push_back(1.0);
      continue;
    }
    if (pooling == StepPooling::kMin) {
      out.push_back(*std::min_element(token_scores.begin() + static_cast<std::ptrdiff_t>(b),
                                      token_scores.begin() + static_cast<std::ptrdiff_t>(e)));
    } else {
      double sum = 0.0;
      for (std::size_t i = b; i < e; ++i) sum += token_scores[i];
      out.push_back(sum / static_cast<double>(e - b));
    }
  }
  return out;
}

double mean_score(std::span<const double> scores) {
  if (scores.empty()) return 0.0;
  return std::accumulate(scores.begin(), scores.end(), 0.0) / static_cast<double>(scores.size());
}

PrmScoreSequence score_trajectory(const Prm& prm, const Task& task, const Trajectory& t,
                                  StepPooling pooling) {
  PrmScoreSequence out;
  out.token_scores = prm.token_scores(task, t);
  const std::size_t n = token_count(t);
  if (out.token_scores.size() != n) {
    throw PrmFault(PrmFault::Kind::kLengthMismatch,
                   "prm returned " + std::to_string(out.token_scores.size()) + " scores for " +
                       std::to_string(n) + " tokens");
  }
  for (double s : out.token_scores) {
    if (!(s >= 0.0 && s <= 1.0)) {
      throw PrmFault(PrmFault::Kind::kOutOfRange, "prm score outside [0, 1]");
    }
  }
  out.step_scores = pool_steps(t, out.token_scores, pooling);
  return out;
}

std::vector<double> ConstantPrm::token_scores(const Task&, const Trajectory& t) const {
  return std::vector<double>(token_count(t), value_);
}

std::vector<double> OraclePrm::token_scores(const Task& task, const Trajectory& t) const {
  const std::vector<int> labels = consistency_labels(task, t, vocab_);
  return {labels.begin(), labels.end()};
}

std::vector<std::vector<int>> prm_features(const Task& task, const Trajectory& t,
                                           const TokenVocab& vocab) {
  namespace f = prm_feature;
  std::vector<std::vector<int>> out;
  out.reserve(token_count(t));
  const int query_class = vocab.class_index(task.query.cls);
  std::vector<char> cited(task.scene.objects.size(), 0);
  int last_cited = -1;
  bool earlier_error = false;
  for (std::size_t s = 0; s < t.steps.size(); ++s) {
    const Step& step = t.steps[s];
    const int kind = static_cast<int>(step.kind);
    const bool last = s + 1 == t.steps.size();
    int quality = f::kPartial;
    bool good = true;
    if (step.kind == StepKind::kPlan) {
      if (step.tokens.size() == 2) {
        good = vocab.value_of(step.tokens[1]) == query_class;
        quality = f::kPlan + (good ? 0 : 1);
      }
    } else if (step.kind == StepKind::kAnswer) {
      if (last && t.final_answer) {
        if (const auto* c = std::get_if<CountAnswer>(&*t.final_answer)) {
          const auto* gt = std::get_if<CountAnswer>(&task.gt_answer);
          const int d = gt ? delta_bucket(c->value - gt->value) : 3;
          quality = f::kCountAnswer + d;
          good = d == 0;
        } else if (const auto* g = std::get_if<GroundingAnswer>(&*t.final_answer)) {
          const auto* gt = std::get_if<GroundingAnswer>(&task.gt_answer);
          const int b = gt ? iou_bucket(compute_iou(g->box, gt->box)) : 4;
          quality = f::kGroundAnswer + b;
          good = b == 0;
        }
      }
    } else if (const auto* bc = std::get_if<BoxClaim>(&step.claim)) {
      int exact = -1;
      bool duplicate = false;
      double best = 0.0;
      for (std::size_t i = 0; i < task.scene.objects.size(); ++i) {
        const SceneObject& o = task.scene.objects[i];
        if (vocab.class_index(o.cls) != bc->cls) continue;
        if (o.box == bc->box) {
          if (cited[i]) {
            duplicate = true;
          } else if (exact < 0) {
            exact = static_cast<int>(i);
          }
        }
        best = std::max(best, compute_iou(o.box, bc->box));
      }
      if (exact >= 0) {
        quality = f::kEvidence;
        cited[static_cast<std::size_t>(exact)] = 1;
        last_cited = exact;
      } else if (duplicate) {
        quality = f::kEvidence + 5;
        good = false;
      } else {
        quality = f::kEvidence + iou_bucket(std::min(best, 0.999));
        good = false;
      }
    } else if (const auto* cf = std::get_if<CountFact>(&step.claim)) {
      const auto members =
          objects_of_class(task.scene, vocab.config().classes[static_cast<std::size_t>(cf->cls)]);
      const int d = delta_bucket(cf->count - static_cast<int>(members.size()));
      quality = f::kCountFact + d;
      good = d == 0;
    } else if (const auto* af = std::get_if<AttributeFact>(&step.claim)) {
      if (last_cited < 0) {
        quality = f::kAttribute + 2;
        good = false;
      } else {
        const auto& attrs = task.scene.objects[static_cast<std::size_t>(last_cited)].attributes;
        const auto it = attrs.find(kColorKey);
        good = it != attrs.end() && vocab.attribute_index(it->second) == af->attribute;
        quality = f::kAttribute + (good ? 0 : 1);
      }
    }
    const int index = f::kStepIndex + static_cast<int>(std::min<std::size_t>(s, 11));
    for (std::size_t k = 0; k < step.tokens.size(); ++k) {
      std::vector<int> active{f::kBias, f::kRoleKind + (k == 0 ? 0 : 4) + kind, index};
      if (earlier_error) active.push_back(f::kEarlierError);
      if (k > 0) active.push_back(quality);
      out.push_back(std::move(active));
    }
    if (!good) earlier_error = true;
  }
  return out;
}

TinyPrm::TinyPrm(TokenVocab vocab) : vocab_(std::move(vocab)), phi_(prm_feature::kCount, 0.0) {}

TinyPrm::TinyPrm(TokenVocab vocab, std::vector<double> phi)
    : vocab_(std::move(vocab)), phi_(std::move(phi)) {
  if (phi_.size() != static_cast<std::size_t>(prm_feature::kCount)) {
    throw Error(ErrorCode::kInvalidArgument,
                "prm parameter vector has " + std::to_string(phi_.size()) + " entries, expected " +
                    std::to_string(prm_feature::kCount));
  }
}

std::vector<double> TinyPrm::token_scores(const Task& task, const Trajectory& t) const {
  std::vector<double> out;
  for (const auto& active : prm_features(task, t, vocab_)) {
    double z = 0.0;
    for (int i : active) z += phi_[static_cast<std::size_t>(i)];
    out.push_back(sigmoid(z));
  }
  return out;
}

double masked_bce(std::span<const double> scores, std::span<const int> labels,
                  std::span<const int> mask, LossNormalization norm) {
  if (scores.size() != labels.size() || scores.size() != mask.size()) {
    throw Error(ErrorCode::kInvalidArgument, "scores, labels and mask differ in length");
  }
  double sum = 0.0;
  double denom = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (norm == LossNormalization::kSequenceLength) denom += 1.0;
    if (mask[i] == 0) continue;
    if (norm == LossNormalization::kMaskedCount) denom += 1.0;
    const double p = std::clamp(scores[i], kScoreClamp, 1.0 - kScoreClamp);
    sum -= labels[i] == 1 ? std::log(p) : std::log(1.0 - p);
  }
  return denom > 0.0 ? sum / denom : 0.0;
}

double prm_loss(const TinyPrm& prm, const Task& task, const LabeledSample& sample,
                std::span<double> grad, double weight, LossNormalization norm) {
  check_sample(sample);
  const auto features = prm_features(task, sample.trajectory, prm.vocab());
  const auto phi = prm.parameters();
  double denom = 0.0;
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (norm == LossNormalization::kSequenceLength || sample.mask[i] == 1) denom += 1.0;
  }
  if (denom == 0.0) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (sample.mask[i] == 0) continue;
    double z = 0.0;
    for (int f : features[i]) z += phi[static_cast<std::size_t>(f)];
    const double raw = sigmoid(z);
    const double p = std::clamp(raw, kScoreClamp, 1.0 - kScoreClamp);
    const int y = sample.labels[i];
    sum -= y == 1 ? std::log(p) : std::log(1.0 - p);
    if (!grad.empty() && p == raw) {
      const double g = weight * (raw - y) / denom;
      for (int f : features[i]) grad[static_cast<std::size_t>(f)] += g;
    }
  }
  return sum / denom;
}

TinyPrm train_prm(const std::vector<LabeledSample>& data, const std::vector<Task>& tasks,
                  const TokenVocab& vocab, const PrmTrainConfig& cfg, PrmTrainReport* report) {
  if (data.empty()) throw Error(ErrorCode::kNoData, "no PRM training samples");
  if (cfg.epochs < 1 || cfg.batch < 1 || !(cfg.lr > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "train_prm needs epochs >= 1, batch >= 1, lr > 0");
  }
  const auto by_id = index_tasks(tasks);
  std::vector<const Task*> sample_task;
  sample_task.reserve(data.size());
  for (const LabeledSample& s : data)
    sample_task.push_back(&find_task(by_id, s.trajectory.task_id));

  TinyPrm prm(vocab);
  auto phi = prm.mutable_parameters();
  const std::size_t dim = phi.size();
  std::vector<double> m(dim, 0.0), v(dim, 0.0), grad(dim, 0.0);
  const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  long step = 0;

  auto mean_loss = [&]() {
    double total = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
      total += prm_loss(prm, *sample_task[i], data[i], {}, 1.0, cfg.norm);
    }
    return total / static_cast<double>(data.size());
  };
  if (report != nullptr) {
    report->initial_loss = mean_loss();
    report->samples = data.size();
    report->epoch_loss.clear();
  }

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch));
      std::fill(grad.begin(), grad.end(), 0.0);
      const double w = 1.0 / static_cast<double>(end - start);
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t i = order[k];
        prm_loss(prm, *sample_task[i], data[i], grad, w, cfg.norm);
      }
      ++step;
      const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
      for (std::size_t j = 0; j < dim; ++j) {
        m[j] = beta1 * m[j] + (1 - beta1) * grad[j];
        v[j] = beta2 * v[j] + (1 - beta2) * grad[j] * grad[j];
        phi[j] -= cfg.lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + eps);
      }
    }
    if (report != nullptr) report->epoch_loss.push_back(mean_loss());
  }
  return prm;
}

double auc(std::span<const double> scores, std::span<const int> labels) {
  std::vector<std::pair<double, int>> items;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    items.emplace_back(scores[i], labels[i]);
    if (labels[i] == 1) ++pos;
  }
  const std::size_t neg = items.size() - pos;
  if (pos == 0 || neg == 0) return std::numeric_limits<double>::quiet_NaN();
  std::sort(items.begin(), items.end());
  // Rank-sum with average ranks over ties.
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < items.size();) {
    std::size_t j = i;
    while (j < items.size() && items[j].first == items[i].first) ++j;
    const double avg = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) {
      if (items[k].second == 1) rank_sum += avg;
    }
    i = j;
  }
  const double p = static_cast<double>(pos);
  return (rank_sum - p * (p + 1) / 2.0) / (p * static_cast<double>(neg));
}

double token_auc(const Prm& prm, const std::vector<LabeledSample>& samples,
                 const std::vector<Task>& tasks) {
  const auto by_id = index_tasks(tasks);
  std::vector<double> scores;
  std::vector<int> labels;
  for (const LabeledSample& s : samples) {
    const Task& task = find_task(by_id, s.trajectory.task_id);
    const PrmScoreSequence seq = score_trajectory(prm, task, s.trajectory);
    for (std::size_t i = 0; i < s.labels.size(); ++i) {
      if (s.mask[i] == 0) continue;
      scores.push_back(seq.token_scores[i]);
      labels.push_back(s.labels[i]);
    }
  }
  return auc(scores, labels);
}

}  // namespace treealign
