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

#include "treealign/remote.hpp"

#include <chrono>
#include <cmath>
#include <thread>

#include "httplib.h"

namespace treealign {

struct JsonClient::Impl {
  std::string host;  // scheme://host:port
  std::string prefix;
};

namespace {

void split_url(const std::string& url, std::string& host, std::string& prefix) {
  const auto scheme = url.find("://");
  if (scheme == std::string::npos || url.compare(0, scheme, "http") != 0) {
    throw Error(ErrorCode::kInvalidArgument, "expected an http:// url, got '" + url + "'");
  }
  const auto slash = url.find('/', scheme + 3);
  host = url.substr(0, slash);
  prefix = slash == std::string::npos ? "" : url.substr(slash);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
}

template <typename Call>
Json with_retries(const RemoteConfig& cfg, const std::string& what, Call call) {
  JsonClient::TransportError err;
  for (int attempt = 1; attempt <= cfg.attempts; ++attempt) {
    err.attempts = attempt;
    httplib::Result res = call();
    if (res) {
      if (res->status >= 200 && res->status < 300) {
        try {
          return Json::parse(res->body);
        } catch (const Json::parse_error& e) {
          throw Error(ErrorCode::kIo, what + ": response is not JSON: " + e.what());
        }
      }
      err.timeout = false;
      err.message = what + ": HTTP " + std::to_string(res->status);
      // Client errors will not fix themselves.
      if (res->status < 500) break;
    } else {
      err.timeout = res.error() == httplib::Error::ConnectionTimeout ||
                    res.error() == httplib::Error::Read || res.error() == httplib::Error::Write;
      err.message = what + ": " + httplib::to_string(res.error());
    }
    if (attempt < cfg.attempts) {
      std::this_thread::sleep_for(std::chrono::milliseconds(cfg.backoff_ms * attempt));
    }
  }
  throw err;
}

}  // namespace

JsonClient::JsonClient(RemoteConfig cfg) : cfg_(std::move(cfg)), impl_(std::make_unique<Impl>()) {
  if (cfg_.attempts < 1) throw Error(ErrorCode::kInvalidArgument, "attempts must be >= 1");
  if (!(cfg_.timeout_s > 0.0)) throw Error(ErrorCode::kInvalidArgument, "timeout must be positive");
  split_url(cfg_.url, impl_->host, impl_->prefix);
}

JsonClient::~JsonClient() = default;

Json JsonClient::post(const std::string& path, const Json& body) const {
  const std::string payload = body.dump();
  return with_retries(cfg_, "POST " + path, [&] {
    httplib::Client cli(impl_->host);
    const auto t = std::chrono::duration<double>(cfg_.timeout_s);
    cli.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(t));
    cli.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(t));
    cli.set_write_timeout(std::chrono::duration_cast<std::chrono::microseconds>(t));
    return cli.Post(impl_->prefix + path, payload, "application/json");
  });
}

Json JsonClient::get(const std::string& path) const {
  return with_retries(cfg_, "GET " + path, [&] {
    httplib::Client cli(impl_->host);
    const auto t = std::chrono::duration<double>(cfg_.timeout_s);
    cli.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(t));
    cli.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(t));
    return cli.Get(impl_->prefix + path);
  });
}

RemotePolicy::RemotePolicy(RemoteConfig cfg, TokenVocab vocab)
    : client_(std::move(cfg)), vocab_(std::move(vocab)) {}

namespace {

PolicyFault policy_transport(const JsonClient::TransportError& e) {
  return PolicyFault(e.timeout ? PolicyFault::Kind::kTimeout : PolicyFault::Kind::kTransport,
                     e.message, e.attempts);
}

}  // namespace

std::vector<double> RemotePolicy::next_distribution(const Task& task,
                                                    std::span<const int> prefix) const {
  const Json body{{"task", task_to_json(task)},
                  {"prefix_tokens", std::vector<int>(prefix.begin(), prefix.end())}};
  Json res;
  try {
    res = client_.post("/v1/policy/next", body);
  } catch (const JsonClient::TransportError& e) {
    throw policy_transport(e);
  }
  std::vector<double> probs;
  try {
    if (!res.is_object() || !res.contains("probs")) {
      throw Error(ErrorCode::kIo, "response lacks 'probs'");
    }
    probs = json_number_array(res["probs"], "probs");
  } catch (const Error& e) {
    throw PolicyFault(PolicyFault::Kind::kMalformed, std::string("policy/next: ") + e.what());
  }
  check_distribution(probs, static_cast<std::size_t>(vocab_.size()), normalization_tolerance());
  return probs;
}

Trajectory RemotePolicy::remote_rollout(const Task& task, std::span<const int> prefix,
                                        const SamplingConfig& cfg) const {
  validate_sampling_config(cfg);
  const Json body{{"task", task_to_json(task)},
                  {"prefix_tokens", std::vector<int>(prefix.begin(), prefix.end())},
                  {"temperature", cfg.temperature},
                  {"top_p", cfg.top_p},
                  {"seed", cfg.seed}};
  Json res;
  try {
    res = client_.post("/v1/policy/rollout", body);
  } catch (const JsonClient::TransportError& e) {
    throw policy_transport(e);
  }
  Trajectory t;
  try {
    t = trajectory_from_json(res);
  } catch (const Error& e) {
    throw PolicyFault(PolicyFault::Kind::kMalformed, std::string("policy/rollout: ") + e.what());
  }
  if (!validate_trajectory(t, vocab_).empty()) {
    throw PolicyFault(PolicyFault::Kind::kMalformed, "policy/rollout: invalid trajectory");
  }
  const std::vector<int> tokens = t.tokens();
  if (tokens.size() < prefix.size() || !std::equal(prefix.begin(), prefix.end(), tokens.begin())) {
    throw PolicyFault(PolicyFault::Kind::kMalformed, "policy/rollout: trajectory drops the prefix");
  }
  return t;
}

Json RemotePolicy::health() const {
  try {
    return client_.get("/v1/health");
  } catch (const JsonClient::TransportError& e) {
    throw policy_transport(e);
  }
}

RemotePrm::RemotePrm(RemoteConfig cfg) : client_(std::move(cfg)) {}

std::vector<double> RemotePrm::token_scores(const Task& task, const Trajectory& t) const {
  const Json body{{"task", task_to_json(task)}, {"trajectory", trajectory_to_json(t)}};
  Json res;
  try {
    res = client_.post("/v1/prm/score", body);
  } catch (const JsonClient::TransportError& e) {
    throw PrmFault(PrmFault::Kind::kTransport, e.message, e.attempts);
  }
  std::vector<double> scores;
  try {
    if (!res.is_object() || !res.contains("token_scores")) {
      throw Error(ErrorCode::kIo, "response lacks 'token_scores'");
    }
    scores = json_number_array(res["token_scores"], "token_scores");
  } catch (const Error& e) {
    throw PrmFault(PrmFault::Kind::kMalformed, std::string("prm/score: ") + e.what());
  }
  if (scores.size() != token_count(t)) {
    throw PrmFault(PrmFault::Kind::kLengthMismatch,
                   "prm/score returned " + std::to_string(scores.size()) + " scores for " +
                       std::to_string(token_count(t)) + " tokens");
  }
  for (double s : scores) {
    if (!(s >= 0.0 && s <= 1.0))
      throw PrmFault(PrmFault::Kind::kOutOfRange, "prm score outside [0, 1]");
  }
  return scores;
}

bool is_url(const std::string& s) {
  return s.rfind("http://", 0) == 0 || s.rfind("https://", 0) == 0;
}

}  // namespace treealign
