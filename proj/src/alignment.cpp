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

#include "treealign/alignment.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace treealign {

void validate_shaping_config(const ShapingConfig& cfg) {
  if (!(cfg.gamma > 0.0 && cfg.gamma < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "gamma must lie in (0, 1)");
  }
  if (!(cfg.rho > 0.0) || !std::isfinite(cfg.rho)) {
    throw Error(ErrorCode::kInvalidArgument, "rho must be > 0");
  }
}

DropMoment drop_moment(std::span<const double> step_scores, double rho) {
  if (step_scores.empty()) throw Error(ErrorCode::kEmptyScores, "drop_moment of no scores");
  DropMoment out;
  for (std::size_t j = 1; j < step_scores.size(); ++j) {
    const double d = step_scores[j - 1] - step_scores[j];
    if (!out.index || d > out.delta) {
      out.delta = d;
      out.index = j;
    }
  }
  out.triggered = out.delta > rho;
  return out;
}

bool drop_penalized(std::span<const double> step_scores, const ShapingConfig& cfg) {
  const DropMoment d = drop_moment(step_scores, cfg.rho);
  return cfg.strict ? d.triggered : d.delta >= cfg.rho;
}

double shaped_reward(const Trajectory& t, const PrmScoreSequence& scores,
                     const ShapingConfig& cfg) {
  if (!t.outcome_score) {
    throw Error(ErrorCode::kMissingOutcome, "trajectory " + t.task_id + " has no outcome score");
  }
  const double s_out = *t.outcome_score;
  return drop_penalized(scores.step_scores, cfg) ? cfg.gamma * s_out : s_out;
}

std::vector<NodeAdvantage> tree_advantages(const ReasonTree& tree,
                                           const std::vector<std::optional<double>>& leaf_rewards) {
  const std::size_t n = tree.nodes.size();
  if (n == 0) throw Error(ErrorCode::kEmptyTree, "tree has no nodes");
  if (leaf_rewards.size() != n) {
    throw Error(ErrorCode::kIncompleteRewards, "leaf rewards must be indexed by node id");
  }
  std::vector<mpq_class> sum(n);
  std::vector<int> count(n, 0);
  // Iterative post-order: children are finished before their parent.
  std::vector<std::pair<int, bool>> stack{{tree.root_id, false}};
  while (!stack.empty()) {
    auto [id, expanded] = stack.back();
    stack.pop_back();
    const TreeNode& node = tree.node(id);
    const auto u = static_cast<std::size_t>(id);
    if (node.is_leaf()) {
      if (!leaf_rewards[u]) {
        throw Error(ErrorCode::kIncompleteRewards, "no reward for leaf " + std::to_string(id));
      }
      sum[u] = mpq_class(*leaf_rewards[u]);
      count[u] = 1;
      continue;
    }
    if (!expanded) {
      stack.emplace_back(id, true);
      for (int c : node.children) stack.emplace_back(c, false);
      continue;
    }
    sum[u] = 0;
    for (int c : node.children) {
      sum[u] += sum[static_cast<std::size_t>(c)];
      count[u] += count[static_cast<std::size_t>(c)];
    }
  }
  std::vector<NodeAdvantage> out(n);
  const auto root = static_cast<std::size_t>(tree.root_id);
  const mpq_class v_root = sum[root] / count[root];
  for (std::size_t i = 0; i < n; ++i) {
    NodeAdvantage& a = out[i];
    const TreeNode& node = tree.nodes[i];
    a.node_id = node.id;
    a.leaf_count = count[i];
    a.exact_value = sum[i] / count[i];
    a.exact_value.canonicalize();
    a.exact_global = a.exact_value - v_root;
    if (node.parent) {
      const auto p = static_cast<std::size_t>(*node.parent);
      a.exact_local = a.exact_value - mpq_class(sum[p] / count[p]);
    } else {
      a.exact_local = 0;
    }
    a.value = a.exact_value.get_d();
    a.global_adv = a.exact_global.get_d();
    a.local_adv = a.exact_local.get_d();
    const mpq_class total = a.exact_global + a.exact_local;
    a.weighted_adv = total.get_d() / std::sqrt(static_cast<double>(a.leaf_count));
  }
  return out;
}

std::vector<double> vanilla_grpo_advantages(std::span<const double> rewards) {
  if (rewards.size() < 2) throw Error(ErrorCode::kGroupTooSmall, "GRPO group needs >= 2 rewards");
  const double mean =
      std::accumulate(rewards.begin(), rewards.end(), 0.0) / static_cast<double>(rewards.size());
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  const double sd = std::sqrt(var / static_cast<double>(rewards.size()));
  std::vector<double> out;
  out.reserve(rewards.size());
  for (double r : rewards) out.push_back((r - mean) / (sd + 1e-8));
  return out;
}

void validate_grpo_config(const GrpoConfig& cfg) {
  if (!(cfg.epsilon > 0.0 && cfg.epsilon < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "epsilon must lie in (0, 1)");
  }
  if (cfg.group_size < 2) throw Error(ErrorCode::kGroupTooSmall, "group_size must be >= 2");
  if (cfg.steps < 0) throw Error(ErrorCode::kInvalidArgument, "steps must be >= 0");
  if (!(cfg.lr > 0.0)) throw Error(ErrorCode::kInvalidArgument, "lr must be > 0");
  if (cfg.inner_epochs < 1) throw Error(ErrorCode::kInvalidArgument, "inner_epochs must be >= 1");
}

GrpoLossReport tree_grpo_loss(const ToySoftmaxPolicy& policy, const ToySoftmaxPolicy& old_policy,
                              const Task& task, const ReasonTree& tree,
                              std::span<const double> advantages, double epsilon,
                              std::span<double> grad, double weight) {
  if (advantages.size() != tree.nodes.size()) {
    throw Error(ErrorCode::kInvalidArgument, "one advantage per node required");
  }
  GrpoLossReport report;
  struct Term {
    std::vector<int> tokens;
    std::size_t begin;
    double coef;
  };
  std::vector<Term> terms;
  double total = 0.0;
  for (const TreeNode& node : tree.nodes) {
    if (!node.parent) continue;
    if (node.tokens.empty()) {
      ++report.skipped_empty;
      continue;
    }
    std::vector<int> tokens = path_tokens(tree, node.id);
    const double lp_new = policy.slice_logprob(task, tokens, node.begin, node.end());
    const double lp_old = old_policy.slice_logprob(task, tokens, node.begin, node.end());
    const double r = std::exp(lp_new - lp_old);
    const double a = advantages[static_cast<std::size_t>(node.id)];
    const double plain = r * a;
    const double clipped = std::clamp(r, 1.0 - epsilon, 1.0 + epsilon) * a;
    const double term = std::min(plain, clipped);
    total += term;
    ++report.nodes;
    // d min(.)/d lp: r * a when the unclipped branch is active, else 0.
    const bool unclipped = plain <= clipped;
    if (!unclipped) ++report.clipped;
    if (!grad.empty() && unclipped && a != 0.0) {
      terms.push_back({std::move(tokens), node.begin, r * a});
    }
  }
  if (report.nodes == 0) return report;
  const double scale = 1.0 / static_cast<double>(report.nodes);
  report.loss = -total * scale;
  for (const Term& t : terms) {
    policy.slice_logprob(task, t.tokens, t.begin, t.tokens.size(), grad, -weight * scale * t.coef);
  }
  return report;
}

ReasonTree flat_tree(const std::string& task_id, const std::vector<Trajectory>& chains) {
  ReasonTree tree;
  tree.task_id = task_id;
  TreeNode root;
  root.id = 0;
  tree.nodes.push_back(root);
  for (const Trajectory& t : chains) {
    TreeNode leaf;
    leaf.id = static_cast<int>(tree.nodes.size());
    leaf.parent = 0;
    leaf.tokens = t.tokens();
    leaf.logprobs = t.token_logprobs;
    leaf.leaf_trajectory = t;
    leaf.stats = {t.outcome_score && *t.outcome_score >= 1.0 ? 1 : 0, 1};
    tree.nodes[0].children.push_back(leaf.id);
    tree.nodes.push_back(std::move(leaf));
  }
  return tree;
}

const char* align_mode_name(AlignMode mode) {
  switch (mode) {
    case AlignMode::kVanilla:
      return "vanilla";
    case AlignMode::kTree:
      return "tree";
    case AlignMode::kTreeProcess:
      return "tree+process";
    case AlignMode::kChainProcess:
      return "chain+process";
    case AlignMode::kTreeAvgScore:
      return "tree+avg-score";
  }
  return "?";
}

AlignMode align_mode_from_name(const std::string& name) {
  for (AlignMode m : all_align_modes()) {
    if (name == align_mode_name(m)) return m;
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown align mode: " + name);
}

std::vector<AlignMode> all_align_modes() {
  return {AlignMode::kVanilla, AlignMode::kTree, AlignMode::kTreeProcess, AlignMode::kChainProcess,
          AlignMode::kTreeAvgScore};
}

EvalSummary evaluate_policy(const Policy& policy, const std::vector<Task>& tasks, int samples,
                            double temperature, std::uint64_t seed, const Prm* prm,
                            const ShapingConfig& shaping) {
  EvalSummary out;
  double n = 0.0;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    for (int k = 0; k < samples; ++k) {
      SamplingConfig sc;
      sc.temperature = temperature;
      sc.seed = derive_seed(derive_seed(seed, i), static_cast<std::uint64_t>(k));
      const Trajectory t = rollout(policy, tasks[i], std::span<const int>{}, sc);
      out.mean_outcome += *t.outcome_score;
      out.accuracy += is_correct(t, tasks[i]) ? 1.0 : 0.0;
      out.mean_len += static_cast<double>(token_count(t));
      if (prm != nullptr) {
        const PrmScoreSequence s = score_trajectory(*prm, tasks[i], t, shaping.pooling);
        if (!s.step_scores.empty() && drop_penalized(s.step_scores, shaping)) out.drop_rate += 1.0;
      }
      n += 1.0;
    }
  }
  if (n > 0) {
    out.mean_outcome /= n;
    out.accuracy /= n;
    out.mean_len /= n;
    out.drop_rate /= n;
  }
  return out;
}

namespace {

bool is_tree_mode(AlignMode m) {
  return m == AlignMode::kTree || m == AlignMode::kTreeProcess || m == AlignMode::kTreeAvgScore;
}

class Adam {
 public:
  Adam(std::size_t dim, double lr) : lr_(lr), m_(dim, 0.0), v_(dim, 0.0) {}
  void step(std::span<double> theta, std::span<const double> grad) {
    ++t_;
    const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < theta.size(); ++i) {
      m_[i] = kBeta1 * m_[i] + (1 - kBeta1) * grad[i];
      v_[i] = kBeta2 * v_[i] + (1 - kBeta2) * grad[i] * grad[i];
      theta[i] -= lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + 1e-8);
    }
  }

 private:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  double lr_;
  long t_ = 0;
  std::vector<double> m_, v_;
};

}  // namespace

AlignResult align(const ToySoftmaxPolicy& init, const std::vector<Task>& tasks, const Prm& prm,
                  const AlignConfig& cfg, AlignMode mode, const IterationCallback& on_iter) {
  if (tasks.empty()) throw Error(ErrorCode::kNoData, "align needs at least one task");
  validate_grpo_config(cfg.grpo);
  validate_shaping_config(cfg.shaping);
  if (cfg.batch_tasks < 1) throw Error(ErrorCode::kInvalidArgument, "batch_tasks must be >= 1");

  AlignResult result{init, {}, {}, {}};
  ToySoftmaxPolicy& policy = result.policy;
  result.before = evaluate_policy(init, tasks, cfg.eval_samples, cfg.rollout_temperature,
                                  cfg.eval_seed, &prm, cfg.shaping);
  Adam adam(policy.num_parameters(), cfg.grpo.lr);
  std::vector<double> grad(policy.num_parameters());

  for (int it = 0; it < cfg.grpo.steps; ++it) {
    const ToySoftmaxPolicy old = policy;
    IterationMetrics m;
    m.iter = it;
    double leaves_seen = 0.0;
    std::vector<std::pair<const Task*, ReasonTree>> trees;
    std::vector<std::vector<double>> advs;
    for (int b = 0; b < cfg.batch_tasks; ++b) {
      const std::size_t ti =
          (static_cast<std::size_t>(it) * static_cast<std::size_t>(cfg.batch_tasks) +
           static_cast<std::size_t>(b)) %
          tasks.size();
      const Task& task = tasks[ti];
      const std::uint64_t seed =
          derive_seed(derive_seed(cfg.grpo.seed, static_cast<std::uint64_t>(it)),
                      static_cast<std::uint64_t>(b));
      ReasonTree tree;
      if (is_tree_mode(mode)) {
        TreeConfig tc = cfg.tree;
        tc.seed = seed;
        tc.temperature = cfg.rollout_temperature;
        tree = build_tree(old, task, tc);
      } else {
        std::vector<Trajectory> chains;
        for (int g = 0; g < cfg.grpo.group_size; ++g) {
          SamplingConfig sc;
          sc.temperature = cfg.rollout_temperature;
          sc.max_steps = cfg.tree.max_steps;
          sc.seed = derive_seed(seed, static_cast<std::uint64_t>(g));
          chains.push_back(rollout(old, task, std::span<const int>{}, sc));
        }
        tree = flat_tree(task.task_id, chains);
      }
      std::vector<std::optional<double>> rewards(tree.nodes.size());
      std::vector<int> leaf_ids;
      std::vector<double> leaf_rewards;
      for (int leaf : leaves_under(tree, tree.root_id)) {
        const Trajectory& t = *tree.node(leaf).leaf_trajectory;
        const PrmScoreSequence s = score_trajectory(prm, task, t, cfg.shaping.pooling);
        const bool dropped = !s.step_scores.empty() && drop_penalized(s.step_scores, cfg.shaping);
        double r = *t.outcome_score;
        switch (mode) {
          case AlignMode::kVanilla:
          case AlignMode::kTree:
            break;
          case AlignMode::kTreeProcess:
          case AlignMode::kChainProcess:
            r = shaped_reward(t, s, cfg.shaping);
            break;
          case AlignMode::kTreeAvgScore:
            r += mean_score(s.token_scores);
            break;
        }
        rewards[static_cast<std::size_t>(leaf)] = r;
        leaf_ids.push_back(leaf);
        leaf_rewards.push_back(r);
        m.mean_reward += r;
        m.mean_outcome += *t.outcome_score;
        m.mean_len += static_cast<double>(token_count(t));
        m.drop_rate += dropped ? 1.0 : 0.0;
        leaves_seen += 1.0;
      }
      std::vector<double> adv(tree.nodes.size(), 0.0);
      if (is_tree_mode(mode)) {
        const auto na = tree_advantages(tree, rewards);
        for (std::size_t i = 0; i < na.size(); ++i) adv[i] = na[i].weighted_adv;
      } else {
        const auto va = vanilla_grpo_advantages(leaf_rewards);
        for (std::size_t k = 0; k < leaf_ids.size(); ++k) {
          adv[static_cast<std::size_t>(leaf_ids[k])] = va[k];
        }
      }
      trees.emplace_back(&task, std::move(tree));
      advs.push_back(std::move(adv));
    }
    const double w = 1.0 / static_cast<double>(trees.size());
    for (int epoch = 0; epoch < cfg.grpo.inner_epochs; ++epoch) {
      std::fill(grad.begin(), grad.end(), 0.0);
      double loss = 0.0;
      for (std::size_t k = 0; k < trees.size(); ++k) {
        const auto rep = tree_grpo_loss(policy, old, *trees[k].first, trees[k].second, advs[k],
                                        cfg.grpo.epsilon, grad, w);
        loss += w * rep.loss;
      }
      if (epoch == 0) m.loss = loss;
      adam.step(policy.mutable_parameters(), grad);
    }
    if (leaves_seen > 0) {
      m.mean_reward /= leaves_seen;
      m.mean_outcome /= leaves_seen;
      m.mean_len /= leaves_seen;
      m.drop_rate /= leaves_seen;
    }
    result.log.push_back(m);
    if (on_iter) on_iter(m);
  }
  result.after = evaluate_policy(policy, tasks, cfg.eval_samples, cfg.rollout_temperature,
                                 cfg.eval_seed, &prm, cfg.shaping);
  return result;
}

}  // namespace treealign
