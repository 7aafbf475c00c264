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
#include <memory>
#include <span>
#include <vector>

#include "treealign/common.hpp"
#include "treealign/toy_env.hpp"
#include "treealign/trajectory.hpp"

namespace treealign {

// Incremental decoding state for one task. Sessions are cheap to clone, which
// is how tree search forks a shared prefix.
class PolicySession {
 public:
  virtual ~PolicySession() = default;
  // Next-token distribution over the full vocabulary for the current prefix.
  virtual std::vector<double> distribution() = 0;
  virtual void push(int token) = 0;
  virtual std::unique_ptr<PolicySession> clone() const = 0;
};

// pi_theta(c_t | c_<t, I, Q). Implementations must tolerate concurrent
// read-only use.
class Policy {
 public:
  virtual ~Policy() = default;

  virtual const TokenVocab& vocab() const = 0;
  virtual std::vector<double> next_distribution(const Task& task,
                                                std::span<const int> prefix) const = 0;
  // Default replays the prefix through next_distribution().
  virtual std::unique_ptr<PolicySession> open(const Task& task) const;
  // Accepted deviation of a distribution's sum from 1.
  virtual double normalization_tolerance() const { return 1e-9; }
};

struct SamplingConfig {
  // 0 selects greedy decoding.
  double temperature = 1.0;
  double top_p = 1.0;
  int max_steps = 12;
  std::uint64_t seed = 0;
};

void validate_sampling_config(const SamplingConfig& cfg);

// Throws PolicyFault(kNonDistribution) unless probs has one finite,
// non-negative entry per vocabulary token summing to 1 within tolerance.
void check_distribution(std::span<const double> probs, std::size_t vocab_size, double tolerance);

// Sampling distribution after temperature scaling and nucleus truncation.
// Nucleus: the smallest prefix of tokens sorted by (probability desc, id asc)
// whose mass reaches top_p, renormalized. Temperature 0 yields a one-hot on
// the argmax (lowest id on ties).
std::vector<double> sampling_distribution(std::span<const double> probs, double temperature,
                                          double top_p);

// Inverse-CDF draw in token-id order.
int sample_index(std::span<const double> probs, Rng& rng);

double entropy_nats(std::span<const double> probs);

// Extends (tokens, logprobs) in place until the trajectory answers, the step
// budget is exhausted, or -- when stop_at_step_boundary is set -- one more
// step has been completed. Logprobs record the untempered policy.
void extend(const Policy& policy, PolicySession& session, std::vector<int>& tokens,
            std::vector<double>& logprobs, const SamplingConfig& cfg, Rng& rng,
            bool stop_at_step_boundary = false);

// Complete trajectory continuing `prefix_tokens`. The outcome score is filled
// from the toy environment when the trajectory answers.
Trajectory rollout(const Policy& policy, const Task& task, std::span<const int> prefix_tokens,
                   const SamplingConfig& cfg);
Trajectory rollout(const Policy& policy, const Task& task, const std::vector<Step>& prefix,
                   const SamplingConfig& cfg);

enum class EntropyPooling { kPerToken, kStepMax };

// Entry i is the entropy (nats) of the next-token distribution at prefix
// length i. kStepMax replaces each entry by the max over its step.
std::vector<double> position_entropies(const Policy& policy, const Task& task, const Trajectory& t,
                                       EntropyPooling pooling = EntropyPooling::kPerToken);

// Per-token natural log-probabilities; throws kVocabulary on ids outside the
// vocabulary.
std::vector<double> token_logprobs(const Policy& policy, const Task& task,
                                   std::span<const int> tokens);
double logprob_of(const Policy& policy, const Task& task, const Trajectory& t);

}  // namespace treealign
