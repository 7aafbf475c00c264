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

#include "treealign/common.hpp"

namespace treealign {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument:
      return "InvalidArgument";
    case ErrorCode::kNotFound:
      return "NotFound";
    case ErrorCode::kPolicyFault:
      return "PolicyFault";
    case ErrorCode::kPrmFault:
      return "PrmFault";
    case ErrorCode::kVocabulary:
      return "VocabularyError";
    case ErrorCode::kDegenerateTask:
      return "DegenerateTask";
    case ErrorCode::kAmbiguousQuery:
      return "AmbiguousQuery";
    case ErrorCode::kNothingToPerturb:
      return "NothingToPerturb";
    case ErrorCode::kNoBackgroundRegion:
      return "NoBackgroundRegion";
    case ErrorCode::kEmptyTree:
      return "EmptyTree";
    case ErrorCode::kIncompleteValues:
      return "IncompleteValues";
    case ErrorCode::kIncompleteRewards:
      return "IncompleteRewards";
    case ErrorCode::kMissingOutcome:
      return "MissingOutcome";
    case ErrorCode::kEmptyScores:
      return "EmptyScores";
    case ErrorCode::kGroupTooSmall:
      return "GroupTooSmall";
    case ErrorCode::kNoData:
      return "NoData";
    case ErrorCode::kConfig:
      return "ConfigError";
    case ErrorCode::kIo:
      return "IoError";
  }
  return "Unknown";
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t stream) {
  return splitmix64(splitmix64(parent) ^ (stream * 0xd1b54a32d192ed03ULL + 1));
}

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) throw Error(ErrorCode::kInvalidArgument, "Rng::below(0)");
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return x % n;
}

int Rng::uniform_int(int lo, int hi) {
  if (hi < lo) throw Error(ErrorCode::kInvalidArgument, "Rng::uniform_int: empty range");
  return lo + static_cast<int>(below(static_cast<std::uint64_t>(hi - lo) + 1));
}

}  // namespace treealign
