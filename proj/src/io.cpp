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

#include "treealign/io.hpp"

#include <openssl/evp.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace treealign {
namespace {

[[noreturn]] void fail(const std::string& where, const std::string& what) {
  throw Error(ErrorCode::kIo, where + ": " + what);
}

const char* query_kind_name(QueryKind k) { return k == QueryKind::kCount ? "count" : "ground"; }

QueryKind query_kind_from(const std::string& s, const std::string& where) {
  if (s == "count") return QueryKind::kCount;
  if (s == "ground") return QueryKind::kGround;
  fail(where, "unknown query kind '" + s + "'");
}

const char* entropy_pooling_name(EntropyPooling p) {
  return p == EntropyPooling::kPerToken ? "token" : "step-max";
}

EntropyPooling entropy_pooling_from(const std::string& s, const std::string& where) {
  if (s == "token") return EntropyPooling::kPerToken;
  if (s == "step-max") return EntropyPooling::kStepMax;
  fail(where, "unknown entropy pooling '" + s + "'");
}

std::map<std::string, std::string> string_map(const Json& j, const std::string& where) {
  if (!j.is_object()) fail(where, "expected an object");
  std::map<std::string, std::string> out;
  for (const auto& [k, v] : j.items()) out[k] = json_string(v, where + "." + k);
  return out;
}

}  // namespace

JsonFields::JsonFields(const Json& j, std::string where) : j_(&j), where_(std::move(where)) {
  if (!j.is_object()) fail(where_, "expected an object");
}

const Json& JsonFields::req(const std::string& key) {
  const Json* v = opt(key);
  if (v == nullptr) fail(where_, "missing key '" + key + "'");
  return *v;
}

const Json* JsonFields::opt(const std::string& key) {
  seen_.push_back(key);
  auto it = j_->find(key);
  return it == j_->end() ? nullptr : &*it;
}

void JsonFields::finish() const {
  for (const auto& [k, v] : j_->items()) {
    if (std::find(seen_.begin(), seen_.end(), k) == seen_.end()) {
      fail(where_, "unknown key '" + k + "'");
    }
  }
}

int json_int(const Json& j, const std::string& where) {
  if (!j.is_number_integer()) fail(where, "expected an integer");
  const auto v = j.get<std::int64_t>();
  if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) {
    fail(where, "integer out of range");
  }
  return static_cast<int>(v);
}

double json_number(const Json& j, const std::string& where) {
  if (!j.is_number()) fail(where, "expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) fail(where, "expected a finite number");
  return v;
}

std::uint64_t json_u64(const Json& j, const std::string& where) {
  if (j.is_number_unsigned()) return j.get<std::uint64_t>();
  if (j.is_number_integer() && j.get<std::int64_t>() >= 0) {
    return static_cast<std::uint64_t>(j.get<std::int64_t>());
  }
  fail(where, "expected a non-negative integer");
}

bool json_bool(const Json& j, const std::string& where) {
  if (!j.is_boolean()) fail(where, "expected a boolean");
  return j.get<bool>();
}

std::string json_string(const Json& j, const std::string& where) {
  if (!j.is_string()) fail(where, "expected a string");
  return j.get<std::string>();
}

std::vector<int> json_int_array(const Json& j, const std::string& where) {
  if (!j.is_array()) fail(where, "expected an array");
  std::vector<int> out;
  out.reserve(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) {
    out.push_back(json_int(j[i], where + "[" + std::to_string(i) + "]"));
  }
  return out;
}

std::vector<double> json_number_array(const Json& j, const std::string& where) {
  if (!j.is_array()) fail(where, "expected an array");
  std::vector<double> out;
  out.reserve(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) {
    out.push_back(json_number(j[i], where + "[" + std::to_string(i) + "]"));
  }
  return out;
}

Json box_to_json(const Box& b) { return Json::array({b.x_min, b.y_min, b.x_max, b.y_max}); }

Box box_from_json(const Json& j) {
  const std::vector<int> v = json_int_array(j, "box");
  if (v.size() != 4) fail("box", "expected [x_min, y_min, x_max, y_max]");
  return Box{v[0], v[1], v[2], v[3]};
}

Json answer_to_json(const Answer& a) {
  if (const auto* c = std::get_if<CountAnswer>(&a)) return Json{{"count", c->value}};
  if (const auto* g = std::get_if<GroundingAnswer>(&a)) return Json{{"box", box_to_json(g->box)}};
  return Json{{"label", std::get<LabelAnswer>(a).label}};
}

Answer answer_from_json(const Json& j) {
  JsonFields f(j, "answer");
  Answer out;
  if (const Json* c = f.opt("count")) {
    out = CountAnswer{json_int(*c, "answer.count")};
  } else if (const Json* b = f.opt("box")) {
    out = GroundingAnswer{box_from_json(*b)};
  } else if (const Json* l = f.opt("label")) {
    out = LabelAnswer{json_string(*l, "answer.label")};
  } else {
    fail("answer", "expected one of count, box, label");
  }
  if (j.size() != 1) fail("answer", "expected exactly one key");
  return out;
}

Json claim_to_json(const Claim& c) {
  if (const auto* b = std::get_if<BoxClaim>(&c)) {
    return Json{{"type", "box"}, {"class", b->cls}, {"box", box_to_json(b->box)}};
  }
  if (const auto* f = std::get_if<CountFact>(&c)) {
    return Json{{"type", "count"}, {"class", f->cls}, {"count", f->count}};
  }
  if (const auto* a = std::get_if<AttributeFact>(&c)) {
    return Json{{"type", "attribute"}, {"attribute", a->attribute}};
  }
  return nullptr;
}

Claim claim_from_json(const Json& j) {
  if (j.is_null()) return std::monostate{};
  JsonFields f(j, "claim");
  const std::string type = json_string(f.req("type"), "claim.type");
  Claim out;
  if (type == "box") {
    out = BoxClaim{json_int(f.req("class"), "claim.class"), box_from_json(f.req("box"))};
  } else if (type == "count") {
    out =
        CountFact{json_int(f.req("class"), "claim.class"), json_int(f.req("count"), "claim.count")};
  } else if (type == "attribute") {
    out = AttributeFact{json_int(f.req("attribute"), "claim.attribute")};
  } else {
    fail("claim.type", "unknown claim type '" + type + "'");
  }
  f.finish();
  return out;
}

Json task_to_json(const Task& t) {
  Json objects = Json::array();
  for (const SceneObject& o : t.scene.objects) {
    objects.push_back({{"class", o.cls}, {"box", box_to_json(o.box)}, {"attrs", o.attributes}});
  }
  Json query{{"kind", query_kind_name(t.query.kind)}, {"class", t.query.cls}};
  query["filter"] = t.query.filter;
  return Json{{"task_id", t.task_id},
              {"scene", {{"w", t.scene.width}, {"h", t.scene.height}, {"objects", objects}}},
              {"query", query},
              {"gt_answer", answer_to_json(t.gt_answer)}};
}

Task task_from_json(const Json& j) {
  JsonFields f(j, "task");
  Task t;
  t.task_id = json_string(f.req("task_id"), "task.task_id");
  JsonFields s(f.req("scene"), "task.scene");
  t.scene.width = json_int(s.req("w"), "scene.w");
  t.scene.height = json_int(s.req("h"), "scene.h");
  const Json& objs = s.req("objects");
  if (!objs.is_array()) fail("scene.objects", "expected an array");
  for (const Json& o : objs) {
    JsonFields of(o, "scene.objects[]");
    SceneObject obj;
    obj.cls = json_string(of.req("class"), "object.class");
    obj.box = box_from_json(of.req("box"));
    obj.attributes = string_map(of.req("attrs"), "object.attrs");
    of.finish();
    t.scene.objects.push_back(std::move(obj));
  }
  s.finish();
  JsonFields q(f.req("query"), "task.query");
  t.query.kind = query_kind_from(json_string(q.req("kind"), "query.kind"), "query.kind");
  t.query.cls = json_string(q.req("class"), "query.class");
  if (const Json* filter = q.opt("filter")) t.query.filter = string_map(*filter, "query.filter");
  q.finish();
  t.gt_answer = answer_from_json(f.req("gt_answer"));
  f.finish();
  return t;
}

Json trajectory_to_json(const Trajectory& t) {
  Json steps = Json::array();
  for (const Step& s : t.steps) {
    steps.push_back({{"kind", step_kind_name(s.kind)},
                     {"tokens", s.tokens},
                     {"claim", claim_to_json(s.claim)}});
  }
  Json out{{"task_id", t.task_id}, {"steps", steps}, {"logprobs", t.token_logprobs}};
  out["answer"] = t.final_answer ? answer_to_json(*t.final_answer) : Json(nullptr);
  out["outcome_score"] = t.outcome_score ? Json(*t.outcome_score) : Json(nullptr);
  return out;
}

Trajectory trajectory_from_json(const Json& j) {
  JsonFields f(j, "trajectory");
  Trajectory t;
  t.task_id = json_string(f.req("task_id"), "trajectory.task_id");
  const Json& steps = f.req("steps");
  if (!steps.is_array()) fail("trajectory.steps", "expected an array");
  for (const Json& sj : steps) {
    JsonFields sf(sj, "trajectory.steps[]");
    Step s;
    const std::string kind = json_string(sf.req("kind"), "step.kind");
    const auto k = step_kind_from_name(kind);
    if (!k) fail("step.kind", "unknown step kind '" + kind + "'");
    s.kind = *k;
    s.tokens = json_int_array(sf.req("tokens"), "step.tokens");
    s.claim = claim_from_json(sf.req("claim"));
    sf.finish();
    t.steps.push_back(std::move(s));
  }
  t.token_logprobs = json_number_array(f.req("logprobs"), "trajectory.logprobs");
  const Json& a = f.req("answer");
  if (!a.is_null()) t.final_answer = answer_from_json(a);
  const Json& o = f.req("outcome_score");
  if (!o.is_null()) t.outcome_score = json_number(o, "trajectory.outcome_score");
  f.finish();
  return t;
}

Json tree_config_to_json(const TreeConfig& c) {
  return Json{{"branch_n", c.branch_n},
              {"rollouts_t", c.rollouts_t},
              {"rounds_k", c.rounds_k},
              {"temperature", c.temperature},
              {"top_p", c.top_p},
              {"seed", c.seed},
              {"min_prefix_tokens", c.min_prefix_tokens},
              {"rescore_each_round", c.rescore_each_round},
              {"pooling", entropy_pooling_name(c.pooling)},
              {"max_steps", c.max_steps}};
}

TreeConfig tree_config_from_json(const Json& j) {
  JsonFields f(j, "tree");
  TreeConfig c;
  if (const Json* v = f.opt("branch_n")) c.branch_n = json_int(*v, "tree.branch_n");
  if (const Json* v = f.opt("rollouts_t")) c.rollouts_t = json_int(*v, "tree.rollouts_t");
  if (const Json* v = f.opt("rounds_k")) c.rounds_k = json_int(*v, "tree.rounds_k");
  if (const Json* v = f.opt("temperature")) c.temperature = json_number(*v, "tree.temperature");
  if (const Json* v = f.opt("top_p")) c.top_p = json_number(*v, "tree.top_p");
  if (const Json* v = f.opt("seed")) c.seed = json_u64(*v, "tree.seed");
  if (const Json* v = f.opt("min_prefix_tokens")) {
    c.min_prefix_tokens = json_int(*v, "tree.min_prefix_tokens");
  }
  if (const Json* v = f.opt("rescore_each_round")) {
    c.rescore_each_round = json_bool(*v, "tree.rescore_each_round");
  }
  if (const Json* v = f.opt("pooling")) {
    c.pooling = entropy_pooling_from(json_string(*v, "tree.pooling"), "tree.pooling");
  }
  if (const Json* v = f.opt("max_steps")) c.max_steps = json_int(*v, "tree.max_steps");
  f.finish();
  return c;
}

Json tree_to_json(const ReasonTree& t) {
  Json nodes = Json::array();
  for (const TreeNode& n : t.nodes) {
    Json nj{{"id", n.id},
            {"parent", n.parent ? Json(*n.parent) : Json(nullptr)},
            {"begin", n.begin},
            {"tokens", n.tokens},
            {"logprobs", n.logprobs},
            {"children", n.children},
            {"leaf", n.is_leaf()},
            {"stats", {{"successes", n.stats.successes}, {"total", n.stats.total}}}};
    if (n.leaf_trajectory) nj["traj"] = trajectory_to_json(*n.leaf_trajectory);
    if (n.value) nj["value"] = *n.value;
    nodes.push_back(std::move(nj));
  }
  return Json{{"task_id", t.task_id},
              {"config", tree_config_to_json(t.config)},
              {"root", t.root_id},
              {"build",
               {{"generated_tokens", t.stats.generated_tokens},
                {"branch_points", t.stats.branch_points},
                {"rounds_run", t.stats.rounds_run}}},
              {"nodes", nodes}};
}

ReasonTree tree_from_json(const Json& j) {
  JsonFields f(j, "tree");
  ReasonTree t;
  t.task_id = json_string(f.req("task_id"), "tree.task_id");
  t.config = tree_config_from_json(f.req("config"));
  t.root_id = json_int(f.req("root"), "tree.root");
  JsonFields b(f.req("build"), "tree.build");
  t.stats.generated_tokens = json_u64(b.req("generated_tokens"), "build.generated_tokens");
  t.stats.branch_points = json_int(b.req("branch_points"), "build.branch_points");
  t.stats.rounds_run = json_int(b.req("rounds_run"), "build.rounds_run");
  b.finish();
  const Json& nodes = f.req("nodes");
  if (!nodes.is_array()) fail("tree.nodes", "expected an array");
  for (const Json& nj : nodes) {
    JsonFields nf(nj, "tree.nodes[]");
    TreeNode n;
    n.id = json_int(nf.req("id"), "node.id");
    if (n.id != static_cast<int>(t.nodes.size())) fail("node.id", "ids must be dense and ordered");
    const Json& p = nf.req("parent");
    if (!p.is_null()) n.parent = json_int(p, "node.parent");
    n.begin = json_u64(nf.req("begin"), "node.begin");
    n.tokens = json_int_array(nf.req("tokens"), "node.tokens");
    n.logprobs = json_number_array(nf.req("logprobs"), "node.logprobs");
    n.children = json_int_array(nf.req("children"), "node.children");
    if (json_bool(nf.req("leaf"), "node.leaf") != n.children.empty()) {
      fail("node.leaf", "flag disagrees with children");
    }
    JsonFields sf(nf.req("stats"), "node.stats");
    n.stats.successes = json_int(sf.req("successes"), "stats.successes");
    n.stats.total = json_int(sf.req("total"), "stats.total");
    sf.finish();
    if (const Json* tr = nf.opt("traj")) n.leaf_trajectory = trajectory_from_json(*tr);
    if (const Json* v = nf.opt("value")) n.value = json_number(*v, "node.value");
    nf.finish();
    t.nodes.push_back(std::move(n));
  }
  f.finish();
  return t;
}

Json sample_to_json(const LabeledSample& s) {
  Json out{{"traj", trajectory_to_json(s.trajectory)},
           {"labels", s.labels},
           {"mask", s.mask},
           {"source", sample_source_name(s.source)}};
  if (!s.detail.empty()) out["detail"] = s.detail;
  return out;
}

LabeledSample sample_from_json(const Json& j) {
  JsonFields f(j, "sample");
  LabeledSample s;
  s.trajectory = trajectory_from_json(f.req("traj"));
  s.labels = json_int_array(f.req("labels"), "sample.labels");
  s.mask = json_int_array(f.req("mask"), "sample.mask");
  try {
    s.source = sample_source_from_name(json_string(f.req("source"), "sample.source"));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kIo) throw;
    fail("sample.source", e.what());
  }
  if (const Json* d = f.opt("detail")) s.detail = json_string(*d, "sample.detail");
  f.finish();
  try {
    check_sample(s);
  } catch (const Error& e) {
    fail("sample", e.what());
  }
  return s;
}

Json vocab_config_to_json(const VocabConfig& v) {
  return Json{{"classes", v.classes},
              {"attributes", v.attributes},
              {"grid_size", v.grid_size},
              {"max_count", v.max_count},
              {"max_steps", v.max_steps}};
}

VocabConfig vocab_config_from_json(const Json& j) {
  JsonFields f(j, "vocab");
  VocabConfig v;
  auto strings = [](const Json& a, const std::string& where) {
    if (!a.is_array()) fail(where, "expected an array");
    std::vector<std::string> out;
    for (const Json& s : a) out.push_back(json_string(s, where + "[]"));
    return out;
  };
  if (const Json* x = f.opt("classes")) v.classes = strings(*x, "vocab.classes");
  if (const Json* x = f.opt("attributes")) v.attributes = strings(*x, "vocab.attributes");
  if (const Json* x = f.opt("grid_size")) v.grid_size = json_int(*x, "vocab.grid_size");
  if (const Json* x = f.opt("max_count")) v.max_count = json_int(*x, "vocab.max_count");
  if (const Json* x = f.opt("max_steps")) v.max_steps = json_int(*x, "vocab.max_steps");
  f.finish();
  return v;
}

Json policy_to_json(const ToySoftmaxPolicy& p) {
  const auto theta = p.parameters();
  return Json{{"kind", "toy-softmax"},
              {"vocab", vocab_config_to_json(p.vocab().config())},
              {"theta", std::vector<double>(theta.begin(), theta.end())}};
}

ToySoftmaxPolicy policy_from_json(const Json& j) {
  JsonFields f(j, "policy");
  const std::string kind = json_string(f.req("kind"), "policy.kind");
  if (kind != "toy-softmax") fail("policy.kind", "unsupported policy kind '" + kind + "'");
  TokenVocab vocab(vocab_config_from_json(f.req("vocab")));
  std::vector<double> theta = json_number_array(f.req("theta"), "policy.theta");
  f.finish();
  const auto expected = static_cast<std::size_t>(StateLayout(vocab.config()).num_states()) *
                        static_cast<std::size_t>(vocab.size());
  if (theta.size() != expected) {
    fail("policy.theta", "expected " + std::to_string(expected) + " parameters, got " +
                             std::to_string(theta.size()));
  }
  return ToySoftmaxPolicy(std::move(vocab), std::move(theta));
}

Json prm_to_json(const TinyPrm& prm, const std::string& trained_on, std::uint64_t seed) {
  const auto phi = prm.parameters();
  return Json{{"feature_spec", TinyPrm::kFeatureSpec},
              {"phi", std::vector<double>(phi.begin(), phi.end())},
              {"trained_on", trained_on},
              {"seed", seed},
              {"vocab", vocab_config_to_json(prm.vocab().config())}};
}

TinyPrm prm_from_json(const Json& j) {
  JsonFields f(j, "prm");
  const std::string spec = json_string(f.req("feature_spec"), "prm.feature_spec");
  if (spec != TinyPrm::kFeatureSpec)
    fail("prm.feature_spec", "unsupported feature spec '" + spec + "'");
  std::vector<double> phi = json_number_array(f.req("phi"), "prm.phi");
  json_string(f.req("trained_on"), "prm.trained_on");
  json_u64(f.req("seed"), "prm.seed");
  VocabConfig vc;
  if (const Json* v = f.opt("vocab")) vc = vocab_config_from_json(*v);
  f.finish();
  if (phi.size() != static_cast<std::size_t>(prm_feature::kCount)) {
    fail("prm.phi", "expected " + std::to_string(prm_feature::kCount) + " parameters");
  }
  return TinyPrm(TokenVocab(std::move(vc)), std::move(phi));
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIo, "cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw Error(ErrorCode::kIo, "short write to " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw Error(ErrorCode::kIo, "cannot rename into " + path.string() + ": " + ec.message());
  }
}

std::vector<Json> read_jsonl(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  std::vector<Json> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(Json::parse(line));
    } catch (const Json::parse_error& e) {
      throw Error(ErrorCode::kIo, path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void write_jsonl_atomic(const std::filesystem::path& path, const std::vector<Json>& records) {
  std::string content;
  for (const Json& r : records) {
    content += r.dump();
    content += '\n';
  }
  write_file_atomic(path, content);
}

Json read_json(const std::filesystem::path& path) {
  try {
    return Json::parse(read_file(path));
  } catch (const Json::parse_error& e) {
    throw Error(ErrorCode::kIo, path.string() + ": " + e.what());
  }
}

void write_json_atomic(const std::filesystem::path& path, const Json& j) {
  write_file_atomic(path, j.dump(2) + "\n");
}

namespace {

template <typename T, typename F>
std::vector<T> load_records(const std::filesystem::path& path, F decode) {
  std::vector<T> out;
  const std::vector<Json> lines = read_jsonl(path);
  out.reserve(lines.size());
  for (std::size_t i = 0; i < lines.size(); ++i) {
    try {
      out.push_back(decode(lines[i]));
    } catch (const Error& e) {
      throw Error(ErrorCode::kIo, path.string() + " record " + std::to_string(i) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace

std::vector<Task> load_tasks(const std::filesystem::path& path) {
  return load_records<Task>(path, task_from_json);
}

std::vector<Trajectory> load_trajectories(const std::filesystem::path& path) {
  return load_records<Trajectory>(path, trajectory_from_json);
}

std::vector<LabeledSample> load_samples(const std::filesystem::path& path) {
  return load_records<LabeledSample>(path, sample_from_json);
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorCode::kIo, "sha256 failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[md[i] >> 4]);
    out.push_back(hex[md[i] & 15]);
  }
  return out;
}

std::string file_sha256(const std::filesystem::path& path) { return sha256_hex(read_file(path)); }

}  // namespace treealign
