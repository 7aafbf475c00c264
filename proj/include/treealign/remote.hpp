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

#include <memory>
#include <string>

#include "treealign/io.hpp"
#include "treealign/policy.hpp"
#include "treealign/prm.hpp"

namespace treealign {

struct RemoteConfig {
  // http://host:port with an optional path prefix.
  std::string url;
  double timeout_s = 10.0;
  // Transport attempts before giving up (timeouts and connection errors
  // retry; malformed or invalid responses do not).
  int attempts = 3;
  int backoff_ms = 50;
};

// Thin JSON-over-HTTP client. Throws TransportError after the last attempt.
class JsonClient {
 public:
  struct TransportError {
    bool timeout = false;
    int attempts = 0;
    std::string message;
  };

  explicit JsonClient(RemoteConfig cfg);
  ~JsonClient();
  JsonClient(const JsonClient&) = delete;
  JsonClient& operator=(const JsonClient&) = delete;

  // Parsed response body; non-2xx responses count as transport failures.
  Json post(const std::string& path, const Json& body) const;
  Json get(const std::string& path) const;
  const RemoteConfig& config() const { return cfg_; }

 private:
  struct Impl;
  RemoteConfig cfg_;
  std::unique_ptr<Impl> impl_;
};

// Policy served over POST /v1/policy/next. Distributions must sum to 1 within
// 1e-6; anything else is a PolicyFault.
class RemotePolicy : public Policy {
 public:
  RemotePolicy(RemoteConfig cfg, TokenVocab vocab);
  const TokenVocab& vocab() const override { return vocab_; }
  std::vector<double> next_distribution(const Task& task,
                                        std::span<const int> prefix) const override;
  double normalization_tolerance() const override { return 1e-6; }

  // Server-side sampling via POST /v1/policy/rollout. The returned trajectory
  // is checked against validate_trajectory and must extend the prefix.
  Trajectory remote_rollout(const Task& task, std::span<const int> prefix,
                            const SamplingConfig& cfg) const;
  // GET /v1/health.
  Json health() const;

 private:
  JsonClient client_;
  TokenVocab vocab_;
};

// PRM served over POST /v1/prm/score.
class RemotePrm : public Prm {
 public:
  explicit RemotePrm(RemoteConfig cfg);
  std::vector<double> token_scores(const Task& task, const Trajectory& t) const override;

 private:
  JsonClient client_;
};

bool is_url(const std::string& s);

}  // namespace treealign
