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
#include <random>
#include <stdexcept>
#include <string>

namespace treealign {

enum class ErrorCode {
  kInvalidArgument,
  kNotFound,
  kPolicyFault,
  kPrmFault,
  kVocabulary,
  kDegenerateTask,
  kAmbiguousQuery,
  kNothingToPerturb,
  kNoBackgroundRegion,
  kEmptyTree,
  kIncompleteValues,
  kIncompleteRewards,
  kMissingOutcome,
  kEmptyScores,
  kGroupTooSmall,
  kNoData,
  kConfig,
  kIo,
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

// Raised when a policy (local or remote) violates the distribution contract
// or cannot be reached. `attempts` counts transport tries for remote policies.
class PolicyFault : public Error {
 public:
  enum class Kind { kNonDistribution, kTimeout, kTransport, kMalformed };

  PolicyFault(Kind kind, const std::string& what, int attempts = 1)
      : Error(ErrorCode::kPolicyFault, what), kind_(kind), attempts_(attempts) {}

  Kind kind() const { return kind_; }
  int attempts() const { return attempts_; }

 private:
  Kind kind_;
  int attempts_;
};

class PrmFault : public Error {
 public:
  enum class Kind { kLengthMismatch, kOutOfRange, kTransport, kMalformed };

  PrmFault(Kind kind, const std::string& what, int attempts = 1)
      : Error(ErrorCode::kPrmFault, what), kind_(kind), attempts_(attempts) {}

  Kind kind() const { return kind_; }
  int attempts() const { return attempts_; }

 private:
  Kind kind_;
  int attempts_;
};

// Seeds derive hierarchically: run seed -> stage seed -> item seed, each hop
// being derive_seed(parent, stream). The mixing function is splitmix64, so
// results never depend on scheduling or worker count.
std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t stream);

// Platform-stable random source. Only raw mt19937_64 output is consumed; the
// standard distributions are avoided because their algorithms are
// implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  // Uniform in [0, 1) with 53 bits of resolution.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  // Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);
  // Uniform integer in [lo, hi] inclusive.
  int uniform_int(int lo, int hi);

 private:
  std::mt19937_64 engine_;
};

}  // namespace treealign
