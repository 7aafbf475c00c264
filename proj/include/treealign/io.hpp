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

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "treealign/injector.hpp"
#include "treealign/mc_labeler.hpp"
#include "treealign/prm.hpp"
#include "treealign/toy_policy.hpp"
#include "treealign/tree.hpp"

namespace treealign {

using Json = nlohmann::json;

// Record codecs for the line-oriented artifact formats. Decoders are strict:
// missing or unknown keys and wrong types throw Error(kIo) naming the field.
Json box_to_json(const Box& b);
Box box_from_json(const Json& j);

Json answer_to_json(const Answer& a);
Answer answer_from_json(const Json& j);

Json claim_to_json(const Claim& c);
Claim claim_from_json(const Json& j);

Json task_to_json(const Task& t);
Task task_from_json(const Json& j);

Json trajectory_to_json(const Trajectory& t);
Trajectory trajectory_from_json(const Json& j);

Json tree_config_to_json(const TreeConfig& c);
TreeConfig tree_config_from_json(const Json& j);

Json tree_to_json(const ReasonTree& t);
ReasonTree tree_from_json(const Json& j);

Json sample_to_json(const LabeledSample& s);
LabeledSample sample_from_json(const Json& j);

Json vocab_config_to_json(const VocabConfig& v);
VocabConfig vocab_config_from_json(const Json& j);

// {kind: "toy-softmax", vocab, theta}
Json policy_to_json(const ToySoftmaxPolicy& p);
ToySoftmaxPolicy policy_from_json(const Json& j);

// {feature_spec, phi, trained_on, seed, vocab}
Json prm_to_json(const TinyPrm& prm, const std::string& trained_on, std::uint64_t seed);
TinyPrm prm_from_json(const Json& j);

// Files. Writes go to a sibling temp file that is renamed into place.
std::string read_file(const std::filesystem::path& path);
void write_file_atomic(const std::filesystem::path& path, const std::string& content);
std::vector<Json> read_jsonl(const std::filesystem::path& path);
void write_jsonl_atomic(const std::filesystem::path& path, const std::vector<Json>& records);
Json read_json(const std::filesystem::path& path);
// Pretty-printed with a trailing newline.
void write_json_atomic(const std::filesystem::path& path, const Json& j);

std::vector<Task> load_tasks(const std::filesystem::path& path);
std::vector<Trajectory> load_trajectories(const std::filesystem::path& path);
std::vector<LabeledSample> load_samples(const std::filesystem::path& path);

std::string sha256_hex(const std::string& bytes);
std::string file_sha256(const std::filesystem::path& path);

// Key checker for strict object decoding.
class JsonFields {
 public:
  JsonFields(const Json& j, std::string where);
  const Json& req(const std::string& key);
  const Json* opt(const std::string& key);
  // Throws when a key was never requested.
  void finish() const;
  const std::string& where() const { return where_; }

 private:
  const Json* j_;
  std::string where_;
  std::vector<std::string> seen_;
};

// Typed getters with kIo errors naming the field.
int json_int(const Json& j, const std::string& where);
double json_number(const Json& j, const std::string& where);
std::uint64_t json_u64(const Json& j, const std::string& where);
bool json_bool(const Json& j, const std::string& where);
std::string json_string(const Json& j, const std::string& where);
std::vector<int> json_int_array(const Json& j, const std::string& where);
std::vector<double> json_number_array(const Json& j, const std::string& where);

}  // namespace treealign
