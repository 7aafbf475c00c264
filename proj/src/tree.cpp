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

#include "treealign/tree.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <tuple>

namespace treealign {
namespace {

constexpr double kEntropyFloor = 1e-12;

struct Candidate {
  double entropy;
  std::size_t position;
  int leaf;
  int node;
};

struct Expansion {
  int node;
  std::size_t position;
  std::vector<std::vector<int>> tokens;
  std::vector<std::vector<double>> logprobs;
};

class Builder {
 public:
  Builder(const Policy& policy, const Task& task, const TreeConfig& cfg)
      : policy_(policy), task_(task), cfg_(cfg) {}

  ReasonTree run() {
    tree_.task_id = task_.task_id;
    tree_.config = cfg_;
    TreeNode root;
    root.id = 0;
    tree_.nodes.push_back(root);
    entropies_.emplace_back();

    std::vector<int> tokens;
    std::vector<double> logprobs;
    sample_from({}, derive_seed(cfg_.seed, 0), tokens, logprobs);
    if (tokens.empty()) {
      throw Error(ErrorCode::kDegenerateTask,
                  "policy produced no tokens for task " + task_.task_id);
    }
    tree_.stats.generated_tokens += tokens.size();
    trunk_leaf_ = add_child(0, 0, std::move(tokens), std::move(logprobs));

    for (int round = 1; round <= cfg_.rounds_k; ++round) {
      std::vector<Candidate> picked = select(round);
      if (picked.empty()) break;
      tree_.stats.rounds_run = round;
      tree_.stats.branch_points += static_cast<int>(picked.size());
      std::vector<Expansion> expansions;
      for (std::size_t b = 0; b < picked.size(); ++b) {
        expansions.push_back(expand(picked[b], round, static_cast<int>(b)));
      }
      // Later positions first, so splits never move an earlier branch point
      // out of the node it was found in.
      std::vector<std::size_t> order(expansions.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return std::tie(expansions[b].position, expansions[a].node) <
               std::tie(expansions[a].position, expansions[b].node);
      });
      for (std::size_t i : order) merge(expansions[i]);
    }
    finish_stats();
    return std::move(tree_);
  }

 private:
  SamplingConfig sampling(std::uint64_t seed) const {
    SamplingConfig s;
    s.temperature = cfg_.temperature;
    s.top_p = cfg_.top_p;
    s.max_steps = cfg_.max_steps;
    s.seed = seed;
    return s;
  }

  void sample_from(const std::vector<int>& prefix, std::uint64_t seed, std::vector<int>& tokens,
                   std::vector<double>& logprobs) const {
    auto session = policy_.open(task_);
    for (int t : prefix) session->push(t);
    std::vector<int> all = prefix;
    std::vector<double> lps(prefix.size(), 0.0);
    Rng rng(seed);
    extend(policy_, *session, all, lps, sampling(seed), rng);
    tokens.assign(all.begin() + static_cast<std::ptrdiff_t>(prefix.size()), all.end());
    logprobs.assign(lps.begin() + static_cast<std::ptrdiff_t>(prefix.size()), lps.end());
  }

  int add_child(int parent, std::size_t begin, std::vector<int> tokens,
                std::vector<double> logprobs) {
    TreeNode n;
    n.id = static_cast<int>(tree_.nodes.size());
    n.parent = parent;
    n.begin = begin;
    n.tokens = std::move(tokens);
    n.logprobs = std::move(logprobs);
    tree_.nodes[static_cast<std::size_t>(parent)].children.push_back(n.id);
    const int id = n.id;
    tree_.nodes.push_back(std::move(n));
    entropies_.emplace_back();
    finalize_leaf(id);
    return id;
  }

  void finalize_leaf(int id) {
    const std::vector<int> path = path_to(tree_, id);
    std::vector<int> tokens;
    std::vector<double> logprobs;
    for (int n : path) {
      const TreeNode& node = tree_.nodes[static_cast<std::size_t>(n)];
      tokens.insert(tokens.end(), node.tokens.begin(), node.tokens.end());
      logprobs.insert(logprobs.end(), node.logprobs.begin(), node.logprobs.end());
    }
    Trajectory t =
        trajectory_from_tokens(policy_.vocab(), task_.task_id, tokens, std::move(logprobs));
    const double score = outcome_score(t, task_);
    t.outcome_score = score;
    TreeNode& node = tree_.nodes[static_cast<std::size_t>(id)];
    node.stats = {is_correct_score(score, task_.query.kind) ? 1 : 0, 1};
    node.leaf_trajectory = std::move(t);
  }

  // Entropy of the next-token distribution at every position of a leaf path,
  // cached per node since a node's slice entropies depend only on its prefix.
  std::vector<std::pair<int, double>> path_entropies(int leaf) {
    const std::vector<int> path = path_to(tree_, leaf);
    std::vector<std::pair<int, double>> out;
    std::unique_ptr<PolicySession> session;
    std::vector<int> prefix;
    for (int n : path) {
      const TreeNode& node = tree_.nodes[static_cast<std::size_t>(n)];
      auto& cache = entropies_[static_cast<std::size_t>(n)];
      if (cache.size() != node.tokens.size()) {
        if (!session) {
          session = policy_.open(task_);
          for (int t : prefix) session->push(t);
        }
        cache.clear();
        const auto vocab_size = static_cast<std::size_t>(policy_.vocab().size());
        for (int t : node.tokens) {
          const std::vector<double> probs = session->distribution();
          check_distribution(probs, vocab_size, policy_.normalization_tolerance());
          cache.push_back(entropy_nats(probs));
          session->push(t);
        }
      } else if (session) {
        for (int t : node.tokens) session->push(t);
      }
      for (double h : cache) out.emplace_back(n, h);
      prefix.insert(prefix.end(), node.tokens.begin(), node.tokens.end());
    }
    if (cfg_.pooling == EntropyPooling::kStepMax) {
      const Trajectory& t = *tree_.nodes[static_cast<std::size_t>(leaf)].leaf_trajectory;
      const auto offsets = step_offsets(t);
      for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
        double m = 0.0;
        for (std::size_t i = offsets[s]; i < offsets[s + 1]; ++i) m = std::max(m, out[i].second);
        for (std::size_t i = offsets[s]; i < offsets[s + 1]; ++i) out[i].second = m;
      }
    }
    return out;
  }

  std::vector<Candidate> select(int /*round*/) {
    std::vector<int> leaves;
    if (cfg_.rescore_each_round) {
      leaves = leaves_under(tree_, 0);
      std::sort(leaves.begin(), leaves.end());
    } else {
      leaves = {trunk_leaf_};
    }
    std::vector<Candidate> all;
    std::set<std::pair<int, std::size_t>> seen;
    for (int leaf : leaves) {
      const auto ents = path_entropies(leaf);
      for (std::size_t p = static_cast<std::size_t>(std::max(cfg_.min_prefix_tokens, 0));
           p < ents.size(); ++p) {
        const int node = ents[p].first;
        if (tree_.nodes[static_cast<std::size_t>(node)].begin == p) continue;
        if (!(ents[p].second > kEntropyFloor)) continue;
        if (!seen.insert({node, p}).second) continue;
        all.push_back({ents[p].second, p, leaf, node});
      }
    }
    std::sort(all.begin(), all.end(), [](const Candidate& a, const Candidate& b) {
      if (a.entropy != b.entropy) return a.entropy > b.entropy;
      if (a.position != b.position) return a.position < b.position;
      return a.leaf < b.leaf;
    });
    if (all.size() > static_cast<std::size_t>(cfg_.branch_n)) {
      all.resize(static_cast<std::size_t>(cfg_.branch_n));
    }
    return all;
  }

  Expansion expand(const Candidate& c, int round, int branch) const {
    Expansion e;
    e.node = c.node;
    e.position = c.position;
    std::vector<int> prefix = path_tokens(tree_, c.leaf);
    prefix.resize(c.position);
    const std::uint64_t base =
        derive_seed(derive_seed(cfg_.seed, static_cast<std::uint64_t>(round)),
                    static_cast<std::uint64_t>(branch));
    for (int k = 0; k < cfg_.rollouts_t; ++k) {
      std::vector<int> tokens;
      std::vector<double> logprobs;
      sample_from(prefix, derive_seed(base, static_cast<std::uint64_t>(k)), tokens, logprobs);
      e.tokens.push_back(std::move(tokens));
      e.logprobs.push_back(std::move(logprobs));
    }
    return e;
  }

  void split(int id, std::size_t position) {
    TreeNode& n = tree_.nodes[static_cast<std::size_t>(id)];
    const std::size_t cut = position - n.begin;
    TreeNode tail;
    tail.id = static_cast<int>(tree_.nodes.size());
    tail.parent = id;
    tail.begin = position;
    tail.tokens.assign(n.tokens.begin() + static_cast<std::ptrdiff_t>(cut), n.tokens.end());
    tail.logprobs.assign(n.logprobs.begin() + static_cast<std::ptrdiff_t>(cut), n.logprobs.end());
    tail.children = std::move(n.children);
    tail.leaf_trajectory = std::move(n.leaf_trajectory);
    tail.stats = n.stats;
    n.tokens.resize(cut);
    n.logprobs.resize(cut);
    n.children = {tail.id};
    n.leaf_trajectory.reset();
    n.stats = {};
    auto& cache = entropies_[static_cast<std::size_t>(id)];
    std::vector<double> tail_cache;
    if (cache.size() > cut) {
      tail_cache.assign(cache.begin() + static_cast<std::ptrdiff_t>(cut), cache.end());
      cache.resize(cut);
    } else {
      cache.clear();
    }
    for (int c : tail.children) tree_.nodes[static_cast<std::size_t>(c)].parent = tail.id;
    if (trunk_leaf_ == id) trunk_leaf_ = tail.id;
    tree_.nodes.push_back(std::move(tail));
    entropies_.push_back(std::move(tail_cache));
  }

  void merge(Expansion& e) {
    split(e.node, e.position);
    for (std::size_t k = 0; k < e.tokens.size(); ++k) {
      tree_.stats.generated_tokens += e.tokens[k].size();
      add_child(e.node, e.position, std::move(e.tokens[k]), std::move(e.logprobs[k]));
    }
  }

  // Internal nodes aggregate the rollout statistics of their leaves.
  void finish_stats() {
    for (TreeNode& n : tree_.nodes) {
      if (n.is_leaf()) continue;
      n.stats = {};
      for (int leaf : leaves_under(tree_, n.id)) {
        const RolloutStats& s = tree_.nodes[static_cast<std::size_t>(leaf)].stats;
        n.stats.successes += s.successes;
        n.stats.total += s.total;
      }
    }
  }

  const Policy& policy_;
  const Task& task_;
  const TreeConfig& cfg_;
  ReasonTree tree_;
  std::vector<std::vector<double>> entropies_;
  int trunk_leaf_ = -1;
};

}  // namespace

void validate_tree_config(const TreeConfig& cfg) {
  if (cfg.branch_n < 1) throw Error(ErrorCode::kInvalidArgument, "branch_n must be >= 1");
  if (cfg.rollouts_t < 1) throw Error(ErrorCode::kInvalidArgument, "rollouts_t must be >= 1");
  if (cfg.rounds_k < 1) throw Error(ErrorCode::kInvalidArgument, "rounds_k must be >= 1");
  if (cfg.min_prefix_tokens < 0) {
    throw Error(ErrorCode::kInvalidArgument, "min_prefix_tokens must be >= 0");
  }
  SamplingConfig s;
  s.temperature = cfg.temperature;
  s.top_p = cfg.top_p;
  s.max_steps = cfg.max_steps;
  validate_sampling_config(s);
}

const TreeNode& ReasonTree::node(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= nodes.size()) {
    throw Error(ErrorCode::kNotFound, "unknown tree node " + std::to_string(id));
  }
  return nodes[static_cast<std::size_t>(id)];
}

ReasonTree build_tree(const Policy& policy, const Task& task, const TreeConfig& cfg) {
  validate_tree_config(cfg);
  return Builder(policy, task, cfg).run();
}

std::vector<int> leaves_under(const ReasonTree& tree, int node_id) {
  tree.node(node_id);
  std::vector<int> out;
  std::vector<int> stack{node_id};
  while (!stack.empty()) {
    const int id = stack.back();
    stack.pop_back();
    const TreeNode& n = tree.node(id);
    if (n.is_leaf()) {
      out.push_back(id);
      continue;
    }
    for (auto it = n.children.rbegin(); it != n.children.rend(); ++it) stack.push_back(*it);
  }
  return out;
}

std::vector<int> path_to(const ReasonTree& tree, int node_id) {
  std::vector<int> path;
  std::optional<int> cur = node_id;
  while (cur) {
    path.push_back(*cur);
    cur = tree.node(*cur).parent;
    if (path.size() > tree.nodes.size()) {
      throw Error(ErrorCode::kInvalidArgument, "cycle in tree parent links");
    }
  }
  std::reverse(path.begin(), path.end());
  return path;
}

std::vector<int> path_tokens(const ReasonTree& tree, int node_id) {
  std::vector<int> out;
  for (int id : path_to(tree, node_id)) {
    const TreeNode& n = tree.node(id);
    out.insert(out.end(), n.tokens.begin(), n.tokens.end());
  }
  return out;
}

std::vector<Trajectory> flatten_paths(const ReasonTree& tree) {
  std::vector<Trajectory> out;
  for (int leaf : leaves_under(tree, tree.root_id)) {
    out.push_back(*tree.node(leaf).leaf_trajectory);
  }
  return out;
}

std::vector<std::string> check_tree(const ReasonTree& tree) {
  std::vector<std::string> problems;
  auto say = [&](int id, const std::string& msg) {
    problems.push_back("node " + std::to_string(id) + ": " + msg);
  };
  if (tree.nodes.empty()) {
    problems.push_back("tree has no nodes");
    return problems;
  }
  int roots = 0;
  for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
    const TreeNode& n = tree.nodes[i];
    const int id = static_cast<int>(i);
    if (n.id != id) say(id, "id does not match storage index");
    if (!n.parent) {
      ++roots;
      if (id != tree.root_id) say(id, "parentless node is not the root");
    } else {
      if (*n.parent < 0 || static_cast<std::size_t>(*n.parent) >= tree.nodes.size()) {
        say(id, "parent out of range");
        continue;
      }
      const TreeNode& p = tree.nodes[static_cast<std::size_t>(*n.parent)];
      if (std::count(p.children.begin(), p.children.end(), id) != 1) {
        say(id, "parent does not list this node exactly once");
      }
      if (n.begin != p.end()) say(id, "slice does not start where the parent ends");
    }
    for (int c : n.children) {
      if (c < 0 || static_cast<std::size_t>(c) >= tree.nodes.size() ||
          tree.nodes[static_cast<std::size_t>(c)].parent != id) {
        say(id, "child " + std::to_string(c) + " does not point back");
      }
    }
    if (n.is_leaf() != n.leaf_trajectory.has_value()) {
      say(id, "leaf flag and trajectory disagree");
    }
    if (n.stats.successes > n.stats.total || n.stats.successes < 0) {
      say(id, "successes exceed total");
    }
    if (n.tokens.size() != n.logprobs.size()) say(id, "token and logprob counts differ");
  }
  if (roots != 1) problems.push_back("expected exactly one root, found " + std::to_string(roots));
  if (!problems.empty()) return problems;

  // Connectivity: every node reachable from the root exactly once.
  std::vector<int> seen(tree.nodes.size(), 0);
  std::vector<int> stack{tree.root_id};
  while (!stack.empty()) {
    const int id = stack.back();
    stack.pop_back();
    if (seen[static_cast<std::size_t>(id)]++ > 0) {
      say(id, "reached twice");
      return problems;
    }
    for (int c : tree.nodes[static_cast<std::size_t>(id)].children) stack.push_back(c);
  }
  for (std::size_t i = 0; i < seen.size(); ++i) {
    if (seen[i] == 0) say(static_cast<int>(i), "unreachable from root");
  }
  for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
    const TreeNode& n = tree.nodes[i];
    if (!n.leaf_trajectory) continue;
    if (n.leaf_trajectory->tokens() != path_tokens(tree, n.id)) {
      say(n.id, "leaf trajectory differs from its root path");
    }
  }
  return problems;
}

std::size_t total_slice_tokens(const ReasonTree& tree) {
  std::size_t total = 0;
  for (const TreeNode& n : tree.nodes) total += n.tokens.size();
  return total;
}

}  // namespace treealign
