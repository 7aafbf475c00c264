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

#include "treealign/policy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace treealign {
namespace {

class ReplaySession : public PolicySession {
 public:
  ReplaySession(const Policy& policy, const Task& task) : policy_(&policy), task_(&task) {}

  std::vector<double> distribution() override {
    return policy_->next_distribution(*task_, prefix_);
  }
  void push(int token) override { prefix_.push_back(token); }
  std::unique_ptr<PolicySession> clone() const override {
    return std::make_unique<ReplaySession>(*this);
  }

 private:
  const Policy* policy_;
  const Task* task_;
  std::vector<int> prefix_;
};

}  // namespace

std::unique_ptr<PolicySession> Policy::open(const Task& task) const {
  return std::make_unique<ReplaySession>(*this, task);
}

void validate_sampling_config(const SamplingConfig& cfg) {
  if (!(cfg.temperature >= 0.0) || !std::isfinite(cfg.temperature)) {
    throw Error(ErrorCode::kInvalidArgument, "sampling temperature must be >= 0");
  }
  if (!(cfg.top_p > 0.0 && cfg.top_p <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "top_p must lie in (0, 1]");
  }
  if (cfg.max_steps < 1) throw Error(ErrorCode::kInvalidArgument, "max_steps must be >= 1");
}

void check_distribution(std::span<const double> probs, std::size_t vocab_size, double tolerance) {
  if (probs.size() != vocab_size) {
    throw PolicyFault(PolicyFault::Kind::kNonDistribution,
                      "distribution has " + std::to_string(probs.size()) + " entries, expected " +
                          std::to_string(vocab_size));
  }
  double sum = 0.0;
  for (double p : probs) {
    if (!std::isfinite(p) || p < 0.0) {
      throw PolicyFault(PolicyFault::Kind::kNonDistribution,
                        "distribution entry is negative or non-finite");
    }
    sum += p;
  }
  if (std::abs(sum - 1.0) > tolerance) {
    throw PolicyFault(PolicyFault::Kind::kNonDistribution,
                      "distribution sums to " + std::to_string(sum));
  }
}

std::vector<double> sampling_distribution(std::span<const double> probs, double temperature,
                                          double top_p) {
  std::vector<double> q(probs.size(), 0.0);
  if (probs.empty()) return q;
  if (temperature <= 0.0) {
    const auto best = std::max_element(probs.begin(), probs.end()) - probs.begin();
    q[static_cast<std::size_t>(best)] = 1.0;
    return q;
  }
  double max_log = -INFINITY;
  for (double p : probs) {
    if (p > 0.0) max_log = std::max(max_log, std::log(p) / temperature);
  }
  double total = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] > 0.0) {
      q[i] = std::exp(std::log(probs[i]) / temperature - max_log);
      total += q[i];
    }
  }
  for (double& v : q) v /= total;
  if (top_p >= 1.0) return q;

  std::vector<std::size_t> order(q.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&q](std::size_t a, std::size_t b) { return q[a] > q[b]; });
  double mass = 0.0;
  std::size_t keep = 0;
  while (keep < order.size() && q[order[keep]] > 0.0) {
    mass += q[order[keep]];
    ++keep;
    if (mass >= top_p) break;
  }
  std::vector<double> out(q.size(), 0.0);
  for (std::size_t k = 0; k < keep; ++k) out[order[k]] = q[order[k]] / mass;
  return out;
}

int sample_index(std::span<const double> probs, Rng& rng) {
  const double u = rng.uniform();
  double cum = 0.0;
  int last_positive = -1;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0.0) continue;
    last_positive = static_cast<int>(i);
    cum += probs[i];
    if (u < cum) return static_cast<int>(i);
  }
  if (last_positive < 0) {
    throw PolicyFault(PolicyFault::Kind::kNonDistribution,
                      "cannot sample from an empty distribution");
  }
  return last_positive;
}

double entropy_nats(std::span<const double> probs) {
  double h = 0.0;
  for (double p : probs) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

void extend(const Policy& policy, PolicySession& session, std::vector<int>& tokens,
            std::vector<double>& logprobs, const SamplingConfig& cfg, Rng& rng,
            bool stop_at_step_boundary) {
  const TokenVocab& vocab = policy.vocab();
  StepParser parser(vocab);
  for (int t : tokens) parser.push(t);
  const std::size_t steps_before = parser.steps().size();
  const auto vocab_size = static_cast<std::size_t>(vocab.size());
  while (!parser.done()) {
    if (parser.at_step_boundary() && static_cast<int>(parser.steps().size()) >= cfg.max_steps) {
      break;
    }
    const std::vector<double> probs = session.distribution();
    check_distribution(probs, vocab_size, policy.normalization_tolerance());
    const std::vector<double> q = sampling_distribution(probs, cfg.temperature, cfg.top_p);
    const int token = sample_index(q, rng);
    session.push(token);
    parser.push(token);
    tokens.push_back(token);
    logprobs.push_back(std::log(probs[static_cast<std::size_t>(token)]));
    if (stop_at_step_boundary && parser.at_step_boundary() &&
        parser.steps().size() > steps_before) {
      break;
    }
  }
}

Trajectory rollout(const Policy& policy, const Task& task, std::span<const int> prefix_tokens,
                   const SamplingConfig& cfg) {
  validate_sampling_config(cfg);
  auto session = policy.open(task);
  std::vector<int> tokens;
  std::vector<double> logprobs;
  const auto vocab_size = static_cast<std::size_t>(policy.vocab().size());
  for (int t : prefix_tokens) {
    if (!policy.vocab().contains(t)) {
      throw Error(ErrorCode::kVocabulary, "prefix token out of vocabulary: " + std::to_string(t));
    }
    const std::vector<double> probs = session->distribution();
    check_distribution(probs, vocab_size, policy.normalization_tolerance());
    logprobs.push_back(std::log(probs[static_cast<std::size_t>(t)]));
    tokens.push_back(t);
    session->push(t);
  }
  Rng rng(cfg.seed);
  extend(policy, *session, tokens, logprobs, cfg, rng);
  Trajectory out =
      trajectory_from_tokens(policy.vocab(), task.task_id, tokens, std::move(logprobs));
  out.outcome_score = outcome_score(out, task);
  return out;
}

Trajectory rollout(const Policy& policy, const Task& task, const std::vector<Step>& prefix,
                   const SamplingConfig& cfg) {
  std::vector<int> tokens;
  for (const Step& s : prefix) tokens.insert(tokens.end(), s.tokens.begin(), s.tokens.end());
  return rollout(policy, task, tokens, cfg);
}

std::vector<double> position_entropies(const Policy& policy, const Task& task, const Trajectory& t,
                                       EntropyPooling pooling) {
  const std::vector<int> tokens = t.tokens();
  auto session = policy.open(task);
  const auto vocab_size = static_cast<std::size_t>(policy.vocab().size());
  std::vector<double> out;
  out.reserve(tokens.size());
  for (int tok : tokens) {
    const std::vector<double> probs = session->distribution();
    check_distribution(probs, vocab_size, policy.normalization_tolerance());
    out.push_back(entropy_nats(probs));
    session->push(tok);
  }
  if (pooling == EntropyPooling::kStepMax) {
    const auto offsets = step_offsets(t);
    for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
      double m = 0.0;
      for (std::size_t i = offsets[s]; i < offsets[s + 1]; ++i) m = std::max(m, out[i]);
      for (std::size_t i = offsets[s]; i < offsets[s + 1]; ++i) out[i] = m;
    }
  }
  return out;
}

std::vector<double> token_logprobs(const Policy& policy, const Task& task,
                                   std::span<const int> tokens) {
  auto session = policy.open(task);
  const auto vocab_size = static_cast<std::size_t>(policy.vocab().size());
  std::vector<double> out;
  out.reserve(tokens.size());
  for (int tok : tokens) {
    if (!policy.vocab().contains(tok)) {
      throw Error(ErrorCode::kVocabulary, "token out of vocabulary: " + std::to_string(tok));
    }
    const std::vector<double> probs = session->distribution();
    check_distribution(probs, vocab_size, policy.normalization_tolerance());
    out.push_back(std::log(probs[static_cast<std::size_t>(tok)]));
    session->push(tok);
  }
  return out;
}

double logprob_of(const Policy& policy, const Task& task, const Trajectory& t) {
  const std::vector<double> lps = token_logprobs(policy, task, t.tokens());
  return std::accumulate(lps.begin(), lps.end(), 0.0);
}

}  // namespace treealign
