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

// Acceptance suite: one PASS/FAIL line per gate.
//
// Gates 1-6 are self-contained property checks against independent oracles.
// Gates 7-10 read the default-seed pipeline run, which is executed twice from
// scratch (the second run also serves the determinism gate).

#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "../unit/test_util.hpp"
#include "treealign/injector.hpp"
#include "treealign/io.hpp"
#include "treealign/pipeline.hpp"
#include "treealign/tts.hpp"

namespace treealign {
namespace {

namespace fs = std::filesystem;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double x) {
  std::ostringstream os;
  os.precision(7);
  os << x;
  return os.str();
}

Outcome drop_moment_gate() {
  const std::vector<double> r{0.9, 0.966, 0.228, 0.4};
  const DropMoment d = drop_moment(r, 0.3);
  PrmScoreSequence s;
  s.step_scores = r;
  Trajectory t;
  t.outcome_score = 0.85;
  const double shaped = shaped_reward(t, s, {});
  // 0.966 - 0.228 in double arithmetic is the reference.
  const bool ok = d.delta == 0.966 - 0.228 && std::abs(d.delta - 0.738) < 1e-15 && d.index == 2u &&
                  d.triggered && shaped == 0.7 * 0.85;
  return {ok, "delta=" + fmt(d.delta) + " shaped=" + fmt(shaped)};
}

Outcome advantage_gate() {
  Rng rng(1001);
  std::size_t nodes = 0;
  for (int k = 0; k < 1000; ++k) {
    const ReasonTree t = testing::random_tree(rng, 200);
    nodes += t.nodes.size();
    std::vector<std::optional<double>> rewards(t.nodes.size());
    for (const TreeNode& n : t.nodes) {
      if (n.is_leaf())
        rewards[static_cast<std::size_t>(n.id)] =
            rng.uniform() < 0.5 ? 0.7 * rng.uniform() : rng.uniform();
    }
    // Oracle: per-node sums by root-path walks.
    std::vector<mpq_class> sum(t.nodes.size(), 0);
    std::vector<int> cnt(t.nodes.size(), 0);
    for (const TreeNode& n : t.nodes) {
      if (!n.is_leaf()) continue;
      for (int a : path_to(t, n.id)) {
        sum[static_cast<std::size_t>(a)] += mpq_class(*rewards[static_cast<std::size_t>(n.id)]);
        ++cnt[static_cast<std::size_t>(a)];
      }
    }
    const auto adv = tree_advantages(t, rewards);
    if (adv[0].exact_global != 0) return {false, "root GA nonzero"};
    for (const TreeNode& n : t.nodes) {
      const auto i = static_cast<std::size_t>(n.id);
      const mpq_class v = sum[i] / cnt[i];
      if (adv[i].exact_value != v || adv[i].leaf_count != cnt[i]) return {false, "value mismatch"};
      if (!n.is_leaf()) {
        mpq_class s = 0;
        for (int c : n.children)
          s += adv[static_cast<std::size_t>(c)].exact_value *
               adv[static_cast<std::size_t>(c)].leaf_count;
        if (s != v * cnt[i]) return {false, "decomposition"};
      }
      mpq_class tele = 0;
      for (int a : path_to(t, n.id)) tele += adv[static_cast<std::size_t>(a)].exact_local;
      if (tele != adv[i].exact_global || adv[i].exact_global != v - sum[0] / cnt[0])
        return {false, "telescoping"};
      const mpq_class both = adv[i].exact_global + adv[i].exact_local;
      if (adv[i].weighted_adv != both.get_d() / std::sqrt(static_cast<double>(cnt[i])))
        return {false, "weighted"};
    }
  }
  return {true, "1000 trees, " + std::to_string(nodes) + " nodes"};
}

Outcome mc_values_gate() {
  Rng rng(1002);
  for (int k = 0; k < 1000; ++k) {
    const ReasonTree t = testing::random_tree(rng, 200);
    std::vector<long> s(t.nodes.size(), 0), n(t.nodes.size(), 0);
    for (const TreeNode& leaf : t.nodes) {
      if (!leaf.is_leaf()) continue;
      for (int a : path_to(t, leaf.id)) {
        s[static_cast<std::size_t>(a)] += leaf.stats.successes;
        n[static_cast<std::size_t>(a)] += leaf.stats.total;
      }
    }
    const auto v = mc_values(t);
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (mpq_class(v[i].successes, v[i].total) != mpq_class(s[i], n[i]) ||
          v[i].successes != s[i] || v[i].total != n[i] ||
          v[i].value != static_cast<double>(s[i]) / static_cast<double>(n[i])) {
        return {false, "tree " + std::to_string(k) + " node " + std::to_string(i)};
      }
    }
  }
  return {true, "1000 trees"};
}

std::vector<double> random_vec(std::size_t n, Rng& rng, double scale) {
  std::vector<double> x(n);
  for (double& e : x) e = scale * (2.0 * rng.uniform() - 1.0);
  return x;
}

// Central differences over the given coordinates of params.
template <typename F>
double fd_error(std::span<double> params, std::span<const double> grad,
                const std::vector<std::size_t>& coords, double h, F f) {
  std::vector<double> a, n;
  for (std::size_t c : coords) {
    const double keep = params[c];
    params[c] = keep + h;
    const double up = f();
    params[c] = keep - h;
    const double down = f();
    params[c] = keep;
    a.push_back(grad[c]);
    n.push_back((up - down) / (2 * h));
  }
  return testing::relative_error(a, n);
}

Outcome gradient_gate() {
  const TokenVocab v;
  const std::size_t dim = ToySoftmaxPolicy(v).num_parameters();
  const auto tasks = generate_tasks(1003, 100, {});
  Rng rng(1004);
  double worst_policy = 0.0, worst_prm = 0.0, worst_grpo = 0.0;
  for (int i = 0; i < 100; ++i) {
    const Task& task = tasks[static_cast<std::size_t>(i)];
    ToySoftmaxPolicy p(v, random_vec(dim, rng, 1.5));
    SamplingConfig sc;
    sc.seed = rng.next();
    const Trajectory t = rollout(p, task, std::vector<int>{}, sc);
    const auto g = p.grad_logprob(task, t);
    worst_policy = std::max(
        worst_policy, fd_error(p.mutable_parameters(), g, testing::fd_coordinates(g, rng, 16), 1e-5,
                               [&] { return logprob_of(p, task, t); }));
  }
  std::vector<Trajectory> gold;
  for (const Task& t : tasks) gold.push_back(gold_trajectory(t, v));
  PerturbationSpec spec;
  spec.seed = 1005;
  const auto samples = build_injection_set(gold, tasks, v, spec).samples;
  std::map<std::string, const Task*> by_id;
  for (const Task& t : tasks) by_id[t.task_id] = &t;
  for (int i = 0; i < 100; ++i) {
    TinyPrm prm(v, random_vec(prm_feature::kCount, rng, 3.0));
    const LabeledSample& s = samples[rng.below(samples.size())];
    const Task& task = *by_id.at(s.trajectory.task_id);
    std::vector<double> g(prm_feature::kCount, 0.0);
    prm_loss(prm, task, s, g);
    std::vector<std::size_t> all(g.size());
    for (std::size_t j = 0; j < all.size(); ++j) all[j] = j;
    worst_prm = std::max(worst_prm, fd_error(prm.mutable_parameters(), g, all, 1e-5,
                                             [&] { return prm_loss(prm, task, s); }));
  }
  for (int i = 0; i < 100; ++i) {
    const Task& task = tasks[static_cast<std::size_t>(i)];
    const ToySoftmaxPolicy old(v, random_vec(dim, rng, 1.0));
    std::vector<double> th(old.parameters().begin(), old.parameters().end());
    for (double& x : th) x += 0.1 * (2.0 * rng.uniform() - 1.0);
    ToySoftmaxPolicy cur(v, th);
    TreeConfig tc;
    tc.branch_n = 2;
    tc.rollouts_t = 2;
    tc.rounds_k = 2;
    tc.seed = rng.next();
    const ReasonTree tree = build_tree(old, task, tc);
    const auto adv = tree_advantages(tree, testing::leaf_outcomes(tree));
    std::vector<double> a(adv.size());
    for (std::size_t k = 0; k < a.size(); ++k) a[k] = adv[k].weighted_adv;
    std::vector<double> g(dim, 0.0);
    tree_grpo_loss(cur, old, task, tree, a, 0.2, g);
    worst_grpo = std::max(
        worst_grpo, fd_error(cur.mutable_parameters(), g, testing::fd_coordinates(g, rng, 16), 1e-6,
                             [&] { return tree_grpo_loss(cur, old, task, tree, a, 0.2).loss; }));
  }
  const bool ok = worst_policy < 1e-4 && worst_prm < 1e-4 && worst_grpo < 1e-4;
  return {ok, "max rel err policy=" + fmt(worst_policy) + " prm=" + fmt(worst_prm) +
                  " grpo=" + fmt(worst_grpo)};
}

Outcome bce_gate() {
  const double one = masked_bce(std::vector<double>{0.5}, std::vector<int>{1}, std::vector<int>{1});
  const double none =
      masked_bce(std::vector<double>{0.5, 0.2}, std::vector<int>{1, 0}, std::vector<int>{0, 0});
  return {std::abs(one - std::log(2.0)) <= 1e-12 && none == 0.0,
          "loss=" + fmt(one) + " zero-mask=" + fmt(none)};
}

// Exact cell-count IoU, independent of the library.
std::pair<long, long> cells(const Box& a, const Box& b) {
  const long iw = std::max(0, std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min));
  const long ih = std::max(0, std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min));
  const long inter = iw * ih;
  const long areas = static_cast<long>(a.x_max - a.x_min) * (a.y_max - a.y_min) +
                     static_cast<long>(b.x_max - b.x_min) * (b.y_max - b.y_min);
  return {inter, areas - inter};
}

std::optional<std::size_t> changed_box(const Trajectory& a, const Trajectory& b) {
  for (std::size_t i = 0; i < a.steps.size(); ++i) {
    if (a.steps[i] != b.steps[i]) return i;
  }
  return std::nullopt;
}

Outcome injection_gate() {
  const TokenVocab v;
  const auto tasks = generate_tasks(1006, 3000, {});
  std::vector<Trajectory> gold;
  std::vector<std::size_t> boxed;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    gold.push_back(gold_trajectory(tasks[i], v));
    for (const Step& s : gold.back().steps) {
      if (std::holds_alternative<BoxClaim>(s.claim)) {
        boxed.push_back(i);
        break;
      }
    }
  }
  int small = 0, large = 0, no_bg = 0;
  for (std::uint64_t k = 0; small < 10000; ++k) {
    const std::size_t i = boxed[k % boxed.size()];
    const LabeledSample s =
        inject_box(gold[i], tasks[i], v, PerturbationKind::kSmallJitter, derive_seed(7, k));
    const auto at = changed_box(gold[i], s.trajectory);
    if (!at) return {false, "small: nothing changed"};
    const auto [in, un] = cells(std::get<BoxClaim>(gold[i].steps[*at].claim).box,
                                std::get<BoxClaim>(s.trajectory.steps[*at].claim).box);
    if (10 * in < un || 2 * in > un)
      return {false, "small: IoU " + std::to_string(in) + "/" + std::to_string(un)};
    ++small;
  }
  for (std::uint64_t k = 0; large < 10000; ++k) {
    const std::size_t i = boxed[k % boxed.size()];
    LabeledSample s;
    try {
      s = inject_box(gold[i], tasks[i], v, PerturbationKind::kLargeJitter, derive_seed(8, k));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kNoBackgroundRegion) throw;
      ++no_bg;
      continue;
    }
    const auto at = changed_box(gold[i], s.trajectory);
    if (!at) return {false, "large: nothing changed"};
    const Box nb = std::get<BoxClaim>(s.trajectory.steps[*at].claim).box;
    for (const SceneObject& o : tasks[i].scene.objects) {
      if (cells(nb, o.box).first != 0) return {false, "large: overlaps an object"};
    }
    ++large;
  }
  return {true, "small=" + std::to_string(small) + " large=" + std::to_string(large) +
                    " (no-background skips " + std::to_string(no_bg) + ")"};
}

const Json* find_mode(const Json& align, const std::string& mode) {
  for (const Json& m : align) {
    if (m.at("mode") == mode) return &m;
  }
  return nullptr;
}

Outcome prm_gate(const Json& report) {
  const Json& h = report.at("prm").at("holdout");
  const double large = h.at("auc_large"), small = h.at("auc_small");
  const bool ok = large >= 0.99 && small >= 0.9 && large >= small;
  return {ok, "auc_large=" + fmt(large) + " auc_small=" + fmt(small) + " large>=small " +
                  (large >= small ? "yes" : "no")};
}

Outcome align_gate(const Json& report) {
  const Json& align = report.at("align");
  bool improves = true;
  std::string detail;
  for (AlignMode m : all_align_modes()) {
    const Json* e = find_mode(align, align_mode_name(m));
    if (!e) return {false, std::string("missing mode ") + align_mode_name(m)};
    const double before = e->at("before").at("mean_outcome"),
                 after = e->at("after").at("mean_outcome");
    improves = improves && after > before;
    detail += std::string(align_mode_name(m)) + "=" + fmt(after) + " ";
  }
  const double van = find_mode(align, "vanilla")->at("after").at("mean_outcome");
  const double tree = find_mode(align, "tree")->at("after").at("mean_outcome");
  const double proc = find_mode(align, "tree+process")->at("after").at("mean_outcome");
  const bool order = proc >= tree && tree >= van;
  const double len_avg = find_mode(align, "tree+avg-score")->at("after").at("mean_len");
  const double len_proc = find_mode(align, "tree+process")->at("after").at("mean_len");
  const double ratio = len_avg / len_proc;
  detail += std::string("| improve ") + (improves ? "yes" : "no") + ", order " +
            (order ? "yes" : "no") + ", length ratio " + fmt(ratio) +
            (ratio <= 0.7 ? " <= 0.7" : " > 0.7");
  return {improves && order && ratio <= 0.7, detail};
}

std::map<int, std::pair<double, double>> budgets(const Json& curve) {
  std::map<int, std::pair<double, double>> out;
  for (const Json& b : curve.at("budgets"))
    out[b.at("n").get<int>()] = {b.at("mean"), b.at("stderr")};
  return out;
}

Outcome tts_gate(const Json& report) {
  const auto bon = budgets(report.at("tts").at("bon"));
  const auto sc = budgets(report.at("tts").at("sc"));
  // hi >= lo up to two combined standard errors.
  auto not_below = [](std::pair<double, double> hi, std::pair<double, double> lo) {
    return hi.first >= lo.first - 2.0 * std::hypot(hi.second, lo.second);
  };
  const bool mono = not_below(bon.at(32), bon.at(8)) && not_below(bon.at(8), bon.at(1));
  const bool beats = bon.at(32).first > sc.at(32).first;
  // M = N/2 on a few tasks per budget.
  const TokenVocab v;
  const ToySoftmaxPolicy p(v);
  const OraclePrm oracle(v);
  bool half = true;
  for (int n : {2, 4, 8, 16, 32}) {
    TtsConfig cfg;
    cfg.strategy = TtsStrategy::kBeamSearch;
    cfg.budget_n = n;
    for (const Task& t : generate_tasks(1007, 3, {}))
      half = half && beam_search(p, oracle, t, cfg).survivors == n / 2;
  }
  std::string d = "bon@1/8/32=" + fmt(bon.at(1).first) + "/" + fmt(bon.at(8).first) + "/" +
                  fmt(bon.at(32).first) + " sc@32=" + fmt(sc.at(32).first) + " beam M=N/2 " +
                  (half ? "yes" : "no");
  return {mono && beats && half, d};
}

int run(int argc, char** argv) {
  CLI::App app{"acceptance gates"};
  std::string work = "acceptance_work";
  std::string expect_red;
  int jobs = 1;
  app.add_option("--work", work, "scratch directory for the two pipeline runs");
  app.add_option("--expect-red", expect_red,
                 "comma list of gate names expected to fail; exit status then reports whether the "
                 "red set matches");
  app.add_option("--jobs", jobs)->check(CLI::PositiveNumber);
  CLI11_PARSE(app, argc, argv);

  std::vector<std::string> order;
  std::map<std::string, Outcome> results;
  auto gate = [&](const std::string& name, const std::function<Outcome()>& f) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = f();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << " [" << fmt(secs)
              << " s]" << std::endl;
    order.push_back(name);
    results[name] = o;
  };

  gate("drop-moment-fixture", drop_moment_gate);
  gate("advantage-identities", advantage_gate);
  gate("mc-values-oracle", mc_values_gate);
  gate("gradient-checks", gradient_gate);
  gate("prm-loss-fixture", bce_gate);
  gate("injection-guarantees", injection_gate);

  const fs::path dir_a = fs::path(work) / "run_a";
  const fs::path dir_b = fs::path(work) / "run_b";
  std::optional<RunManifest> a;
  std::optional<std::string> pipeline_error;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    fs::remove_all(dir_a);
    PipelineOptions o;
    o.out_dir = dir_a;
    o.jobs = jobs;
    o.command = "acceptance";
    a = run_pipeline(RunConfig{}, o);
  } catch (const std::exception& e) {
    pipeline_error = e.what();
  }
  const double pipe_secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::cout << "# default pipeline run took " << fmt(pipe_secs) << " s" << std::endl;
  auto report_gate = [&](const std::string& name, Outcome (*f)(const Json&)) {
    gate(name, [&] {
      if (pipeline_error) return Outcome{false, "pipeline failed: " + *pipeline_error};
      return f(read_json(dir_a / "report.json"));
    });
  };
  report_gate("prm-separability", prm_gate);
  report_gate("alignment-gates", align_gate);
  report_gate("tts-scaling", tts_gate);
  gate("determinism", [&] {
    if (pipeline_error) return Outcome{false, "pipeline failed: " + *pipeline_error};
    fs::remove_all(dir_b);
    PipelineOptions o;
    o.out_dir = dir_b;
    o.jobs = jobs;
    o.command = "acceptance";
    const RunManifest b = run_pipeline(RunConfig{}, o);
    const auto da = output_digests(*a), db = output_digests(b);
    std::size_t same = 0;
    for (const auto& [k, d] : da) same += db.count(k) && db.at(k) == d;
    return Outcome{
        da == db, std::to_string(same) + "/" + std::to_string(da.size()) + " output digests match"};
  });

  std::set<std::string> red;
  for (const auto& name : order) {
    if (!results[name].pass) red.insert(name);
  }
  std::cout << "# " << order.size() - red.size() << "/" << order.size() << " gates pass"
            << std::endl;
  if (!app.count("--expect-red")) return red.empty() ? 0 : 1;
  std::set<std::string> expected;
  std::stringstream ss(expect_red);
  for (std::string item; std::getline(ss, item, ',');) {
    if (!item.empty()) expected.insert(item);
  }
  if (red == expected) {
    std::cout << "# red set matches the documented expectation" << std::endl;
    return 0;
  }
  std::cout << "# red set differs from the documented expectation" << std::endl;
  return 1;
}

}  // namespace
}  // namespace treealign

int main(int argc, char** argv) { return treealign::run(argc, argv); }
