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

#include "treealign/tts.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <sstream>
#include <thread>

namespace treealign {
namespace {

SamplingConfig sampling(const TtsConfig& cfg, std::uint64_t seed) {
  SamplingConfig s;
  s.temperature = cfg.temperature;
  s.top_p = cfg.top_p;
  s.max_steps = cfg.max_steps;
  s.seed = seed;
  return s;
}

std::vector<Trajectory> sample_n(const Policy& policy, const Task& task, const TtsConfig& cfg) {
  std::vector<Trajectory> out;
  out.reserve(static_cast<std::size_t>(cfg.budget_n));
  for (int i = 0; i < cfg.budget_n; ++i) {
    out.push_back(rollout(policy, task, std::span<const int>{},
                          sampling(cfg, derive_seed(cfg.seed, static_cast<std::uint64_t>(i)))));
  }
  return out;
}

double mean_token_logprob(const Trajectory& t) {
  if (t.token_logprobs.empty()) return 0.0;
  return std::accumulate(t.token_logprobs.begin(), t.token_logprobs.end(), 0.0) /
         static_cast<double>(t.token_logprobs.size());
}

double aggregate(std::span<const double> step_scores, BeamAggregate how) {
  if (step_scores.empty()) return 1.0;
  if (how == BeamAggregate::kMin) return *std::min_element(step_scores.begin(), step_scores.end());
  return mean_score(step_scores);
}

struct Partial {
  std::unique_ptr<PolicySession> session;
  std::vector<int> tokens;
  std::vector<double> logprobs;
  Trajectory trajectory;
  double score = 1.0;
  bool done = false;
};

}  // namespace

const char* tts_strategy_name(TtsStrategy s) {
  switch (s) {
    case TtsStrategy::kGreedy:
      return "greedy";
    case TtsStrategy::kSelfConsistency:
      return "sc";
    case TtsStrategy::kBestOfN:
      return "bon";
    case TtsStrategy::kBeamSearch:
      return "beam";
  }
  return "?";
}

TtsStrategy tts_strategy_from_name(const std::string& name) {
  for (TtsStrategy s : {TtsStrategy::kGreedy, TtsStrategy::kSelfConsistency, TtsStrategy::kBestOfN,
                        TtsStrategy::kBeamSearch}) {
    if (name == tts_strategy_name(s)) return s;
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown tts strategy: " + name);
}

void validate_tts_config(const TtsConfig& cfg) {
  if (cfg.budget_n < 1) throw Error(ErrorCode::kInvalidArgument, "budget_n must be >= 1");
  if (cfg.strategy == TtsStrategy::kBeamSearch) {
    if (cfg.budget_n < 2 || cfg.budget_n % 2 != 0) {
      throw Error(ErrorCode::kInvalidArgument, "beam search needs an even budget_n >= 2");
    }
    if (cfg.beam_fanout < 1 || cfg.budget_n % cfg.beam_fanout != 0) {
      throw Error(ErrorCode::kInvalidArgument, "beam_fanout must divide budget_n");
    }
  }
  validate_sampling_config(sampling(cfg, cfg.seed));
}

Trajectory greedy_decode(const Policy& policy, const Task& task, int max_steps) {
  SamplingConfig s;
  s.temperature = 0.0;
  s.max_steps = max_steps;
  return rollout(policy, task, std::span<const int>{}, s);
}

SelfConsistencyResult self_consistency(const Policy& policy, const Task& task,
                                       const TtsConfig& cfg) {
  validate_tts_config(cfg);
  SelfConsistencyResult out;
  out.samples = sample_n(policy, task, cfg);

  struct Group {
    Answer answer;
    int votes = 0;
    double logprob_sum = 0.0;
  };
  std::vector<Group> groups;
  for (const Trajectory& t : out.samples) {
    if (!t.final_answer) continue;
    auto it = std::find_if(groups.begin(), groups.end(),
                           [&](const Group& g) { return g.answer == *t.final_answer; });
    if (it == groups.end()) {
      groups.push_back(Group{*t.final_answer});
      it = groups.end() - 1;
    }
    ++it->votes;
    it->logprob_sum += mean_token_logprob(t);
  }
  if (groups.empty()) throw Error(ErrorCode::kDegenerateTask, "no sample produced an answer");
  std::size_t best = 0;
  for (std::size_t g = 1; g < groups.size(); ++g) {
    const Group& a = groups[g];
    const Group& b = groups[best];
    if (a.votes != b.votes) {
      if (a.votes > b.votes) best = g;
      continue;
    }
    if (a.logprob_sum / a.votes > b.logprob_sum / b.votes) best = g;
  }
  out.answer = groups[best].answer;
  out.votes = groups[best].votes;
  return out;
}

BestOfNResult best_of_n(const Policy& policy, const Prm& prm, const Task& task,
                        const TtsConfig& cfg) {
  validate_tts_config(cfg);
  BestOfNResult out;
  for (Trajectory& t : sample_n(policy, task, cfg)) {
    ScoredCandidate c;
    c.token_scores = score_trajectory(prm, task, t).token_scores;
    c.mean_score = mean_score(c.token_scores);
    const auto offsets = step_offsets(t);
    std::size_t process_end = offsets.back();
    if (!t.steps.empty() && t.steps.back().kind == StepKind::kAnswer) {
      process_end = offsets[t.steps.size() - 1];
    }
    c.process_mean = mean_score(std::span<const double>(c.token_scores).first(process_end));
    c.trajectory = std::move(t);
    out.candidates.push_back(std::move(c));
  }
  for (std::size_t i = 1; i < out.candidates.size(); ++i) {
    const ScoredCandidate& a = out.candidates[i];
    const ScoredCandidate& b = out.candidates[out.chosen];
    if (a.mean_score > b.mean_score ||
        (a.mean_score == b.mean_score && a.process_mean > b.process_mean)) {
      out.chosen = i;
    }
  }
  for (const ScoredCandidate& c : out.candidates) {
    if (c.mean_score > out.candidates[out.chosen].mean_score) {
      throw Error(ErrorCode::kInvalidArgument, "best_of_n winner is not the maximum");
    }
  }
  return out;
}

BeamResult beam_search(const Policy& policy, const Prm& prm, const Task& task,
                       const TtsConfig& cfg) {
  validate_tts_config(cfg);
  const int survivors = cfg.budget_n / cfg.beam_fanout;
  const SamplingConfig base = sampling(cfg, cfg.seed);

  auto expand = [&](const Partial& from, std::uint64_t seed) {
    Partial p;
    p.session = from.session->clone();
    p.tokens = from.tokens;
    p.logprobs = from.logprobs;
    Rng rng(seed);
    extend(policy, *p.session, p.tokens, p.logprobs, base, rng, true);
    p.trajectory = trajectory_from_tokens(policy.vocab(), task.task_id, p.tokens, p.logprobs);
    p.done = p.trajectory.final_answer.has_value() ||
             static_cast<int>(p.trajectory.steps.size()) >= cfg.max_steps;
    const PrmScoreSequence s = score_trajectory(prm, task, p.trajectory);
    p.score = aggregate(s.step_scores, cfg.beam_aggregate);
    return p;
  };

  Partial root;
  root.session = policy.open(task);
  std::vector<Partial> beam;
  for (int j = 0; j < cfg.budget_n; ++j) {
    beam.push_back(
        expand(root, derive_seed(derive_seed(cfg.seed, 0), static_cast<std::uint64_t>(j))));
  }
  int round = 0;
  auto prune = [&] {
    std::vector<std::size_t> order(beam.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return beam[a].score > beam[b].score; });
    order.resize(std::min(order.size(), static_cast<std::size_t>(survivors)));
    std::sort(order.begin(), order.end());
    std::vector<Partial> kept;
    for (std::size_t i : order) kept.push_back(std::move(beam[i]));
    beam = std::move(kept);
  };
  prune();
  while (++round <= cfg.max_steps) {
    if (std::all_of(beam.begin(), beam.end(), [](const Partial& p) { return p.done; })) break;
    std::vector<Partial> next;
    for (std::size_t r = 0; r < beam.size(); ++r) {
      if (beam[r].done) {
        next.push_back(std::move(beam[r]));
        continue;
      }
      for (int j = 0; j < cfg.beam_fanout; ++j) {
        const std::uint64_t seed =
            derive_seed(derive_seed(derive_seed(cfg.seed, static_cast<std::uint64_t>(round)), r),
                        static_cast<std::uint64_t>(j));
        next.push_back(expand(beam[r], seed));
      }
    }
    beam = std::move(next);
    prune();
  }

  BeamResult out;
  out.survivors = survivors;
  out.rounds = round;
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < beam.size(); ++i) {
    if (!beam[i].done) continue;
    if (!best || beam[i].score > beam[*best].score) best = i;
  }
  if (!best) throw Error(ErrorCode::kDegenerateTask, "beam search finished no trajectory");
  out.trajectory = std::move(beam[*best].trajectory);
  out.trajectory.outcome_score = outcome_score(out.trajectory, task);
  out.score = beam[*best].score;
  return out;
}

bool answer_correct(const Answer& a, const Task& task) {
  Trajectory t;
  t.final_answer = a;
  return is_correct(t, task);
}

Trajectory run_strategy(const Policy& policy, const Prm& prm, const Task& task,
                        const TtsConfig& cfg) {
  switch (cfg.strategy) {
    case TtsStrategy::kGreedy:
      return greedy_decode(policy, task, cfg.max_steps);
    case TtsStrategy::kSelfConsistency: {
      SelfConsistencyResult r = self_consistency(policy, task, cfg);
      for (Trajectory& t : r.samples) {
        if (t.final_answer && *t.final_answer == r.answer) return std::move(t);
      }
      break;
    }
    case TtsStrategy::kBestOfN: {
      BestOfNResult r = best_of_n(policy, prm, task, cfg);
      return std::move(r.candidates[r.chosen].trajectory);
    }
    case TtsStrategy::kBeamSearch:
      return beam_search(policy, prm, task, cfg).trajectory;
  }
  throw Error(ErrorCode::kInvalidArgument, "unreachable strategy");
}

ScalingCurve scaling_curve(const Policy& policy, const Prm& prm, const std::vector<Task>& tasks,
                           TtsStrategy strategy, const std::vector<int>& budgets, int seeds,
                           const TtsConfig& base, int jobs) {
  if (budgets.empty() || tasks.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "scaling_curve needs budgets and tasks");
  }
  if (seeds < 1) throw Error(ErrorCode::kInvalidArgument, "seeds must be >= 1");
  ScalingCurve curve;
  curve.strategy = tts_strategy_name(strategy);
  for (int n : budgets) {
    ScalingRow row;
    row.n = n;
    for (int s = 0; s < seeds; ++s) {
      std::vector<char> correct(tasks.size(), 0);
      std::atomic<std::size_t> next{0};
      auto work = [&] {
        for (std::size_t i = next++; i < tasks.size(); i = next++) {
          TtsConfig cfg = base;
          cfg.strategy = strategy;
          cfg.budget_n = n;
          cfg.seed = derive_seed(derive_seed(base.seed, static_cast<std::uint64_t>(s)), i);
          const Trajectory t = run_strategy(policy, prm, tasks[i], cfg);
          correct[i] = is_correct(t, tasks[i]) ? 1 : 0;
        }
      };
      std::vector<std::thread> pool;
      for (int w = 1; w < jobs; ++w) pool.emplace_back(work);
      work();
      for (std::thread& th : pool) th.join();
      row.per_seed.push_back(
          static_cast<double>(std::accumulate(correct.begin(), correct.end(), 0)) /
          static_cast<double>(tasks.size()));
    }
    row.mean = mean_score(row.per_seed);
    if (seeds > 1) {
      double ss = 0.0;
      for (double v : row.per_seed) ss += (v - row.mean) * (v - row.mean);
      row.stderr_ = std::sqrt(ss / (seeds - 1)) / std::sqrt(static_cast<double>(seeds));
    }
    curve.rows.push_back(std::move(row));
  }
  return curve;
}

Json scaling_curve_to_json(const ScalingCurve& c) {
  Json rows = Json::array();
  for (const ScalingRow& r : c.rows) {
    rows.push_back({{"n", r.n}, {"mean", r.mean}, {"stderr", r.stderr_}, {"per_seed", r.per_seed}});
  }
  return Json{{"strategy", c.strategy}, {"budgets", rows}};
}

std::string scaling_curve_to_csv(const ScalingCurve& c) {
  std::ostringstream out;
  out.precision(17);
  out << "strategy,n,mean,stderr\n";
  for (const ScalingRow& r : c.rows) {
    out << c.strategy << ',' << r.n << ',' << r.mean << ',' << r.stderr_ << '\n';
  }
  return out.str();
}

}  // namespace treealign
