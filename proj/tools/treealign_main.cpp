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

// treealign: command-line driver for the toolkit stages.
//
// Exit codes: 0 success, 2 configuration or usage error, 3 stage failure.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <memory>
#include <sstream>

#include "CLI11.hpp"
#include "treealign/config.hpp"
#include "treealign/pipeline.hpp"
#include "treealign/remote.hpp"

namespace fs = std::filesystem;
using namespace treealign;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitStage = 3;

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Globals {
  std::string config_path;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out;
  bool resume = false;
  int jobs = 1;
};

RunConfig base_config(const Globals& g) {
  RunConfig c;
  if (!g.config_path.empty()) c = load_config(g.config_path);
  if (g.seed_set) c.seed = g.seed;
  return c;
}

std::string need_out(const Globals& g) {
  if (g.out.empty()) throw ConfigError("--out is required");
  return g.out;
}

std::unique_ptr<Policy> load_policy(const std::string& spec, const RunConfig& cfg) {
  if (is_url(spec))
    return std::make_unique<RemotePolicy>(RemoteConfig{spec}, TokenVocab(cfg.vocab));
  return std::make_unique<ToySoftmaxPolicy>(policy_from_json(read_json(spec)));
}

std::unique_ptr<Prm> load_prm(const std::string& spec, const RunConfig& cfg) {
  if (spec == "oracle") return std::make_unique<OraclePrm>(TokenVocab(cfg.vocab));
  if (is_url(spec)) return std::make_unique<RemotePrm>(RemoteConfig{spec});
  return std::make_unique<TinyPrm>(prm_from_json(read_json(spec)));
}

std::map<std::string, double> parse_mix(const std::string& s) {
  std::map<std::string, double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos)
      throw ConfigError("--mix expects key=weight pairs, got '" + item + "'");
    try {
      out[item.substr(0, eq)] = std::stod(item.substr(eq + 1));
    } catch (const std::exception&) {
      throw ConfigError("--mix weight is not a number: '" + item + "'");
    }
  }
  return out;
}

void write_lines(const fs::path& p, const std::vector<Json>& lines) {
  write_jsonl_atomic(p, lines);
}

void log_line(const std::string& s) { std::cerr << s << std::endl; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "treealign: tree-search data synthesis, process rewards and tree-structured alignment"};
  app.require_subcommand(1);
  // Subcommands inherit this, so global flags may follow the subcommand.
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config_path, "JSON config file (strict keys)");
  app.add_option_function<std::uint64_t>(
      "--seed",
      [&](const std::uint64_t& s) {
        g.seed = s;
        g.seed_set = true;
      },
      "run seed");
  app.add_option("--out", g.out, "output file or directory");
  app.add_flag("--resume", g.resume,
               "skip stages whose inputs and outputs still match the manifest");
  app.add_option("--jobs", g.jobs, "worker threads")->check(CLI::PositiveNumber);

  std::function<void()> action;

  // synth
  auto* synth = app.add_subcommand("synth", "generate toy tasks");
  int synth_count = -1;
  synth->add_option("--count", synth_count, "number of tasks");
  synth->callback([&] {
    action = [&] {
      const RunConfig c = base_config(g);
      const int n = synth_count >= 0 ? synth_count : c.synth.count;
      std::vector<Json> lines;
      for (const Task& t : generate_tasks(c.seed, n, c.synth.generation))
        lines.push_back(task_to_json(t));
      write_lines(need_out(g), lines);
    };
  });

  // init-policy
  auto* init = app.add_subcommand("init-policy", "supervised warm start on gold chains");
  std::string init_tasks;
  int init_steps = -1;
  double init_lr = -1.0;
  init->add_option("--tasks", init_tasks, "task JSONL")->required();
  init->add_option("--steps", init_steps, "gradient steps");
  init->add_option("--lr", init_lr, "learning rate");
  init->callback([&] {
    action = [&] {
      const RunConfig c = base_config(g);
      SftReport rep;
      const ToySoftmaxPolicy p = train_sft_policy(load_tasks(init_tasks), TokenVocab(c.vocab),
                                                  init_steps >= 0 ? init_steps : c.sft.steps,
                                                  init_lr > 0 ? init_lr : c.sft.lr, &rep);
      write_json_atomic(need_out(g), policy_to_json(p));
      std::printf("sft loss %.6f -> %.6f\n", rep.losses.front(), rep.losses.back());
    };
  });

  // tree
  auto* tree = app.add_subcommand("tree", "entropy-guided tree rollouts");
  std::string tree_tasks, tree_policy;
  int tn = -1, tt = -1, tk = -1;
  double ttemp = -1.0;
  tree->add_option("--tasks", tree_tasks, "task JSONL")->required();
  tree->add_option("--policy", tree_policy, "policy JSON file or http:// url")->required();
  tree->add_option("--n", tn, "branch points per round");
  tree->add_option("--t", tt, "rollouts per branch point");
  tree->add_option("--k", tk, "branching rounds");
  tree->add_option("--temp", ttemp, "rollout temperature");
  tree->callback([&] {
    action = [&] {
      const RunConfig c = base_config(g);
      TreeConfig tc = c.tree;
      if (tn >= 0) tc.branch_n = tn;
      if (tt >= 0) tc.rollouts_t = tt;
      if (tk >= 0) tc.rounds_k = tk;
      if (ttemp >= 0) tc.temperature = ttemp;
      tc.seed = c.seed;
      try {
        validate_tree_config(tc);
      } catch (const Error& e) {
        throw ConfigError(e.what());
      }
      const auto policy = load_policy(tree_policy, c);
      std::vector<Json> lines;
      for (const ReasonTree& t : build_trees(*policy, load_tasks(tree_tasks), tc, g.jobs)) {
        lines.push_back(tree_to_json(t));
      }
      fs::path out = need_out(g);
      if (fs::is_directory(out) || g.out.back() == '/') out /= "trees.jsonl";
      write_lines(out, lines);
    };
  });

  // label
  auto* label = app.add_subcommand("label", "Monte Carlo token labels with variance filtering");
  std::string label_trees_in, label_report;
  double threshold = 0.5, min_std = 1e-6;
  label->add_option("--trees", label_trees_in, "tree JSONL file or directory holding trees.jsonl")
      ->required();
  label->add_option("--threshold", threshold, "value threshold for a positive label");
  label->add_option("--min-std", min_std, "minimum leaf correctness std for a tree to be kept");
  label->add_option("--report", label_report, "filter report JSON");
  label->callback([&] {
    action = [&] {
      if (!(threshold > 0.0 && threshold < 1.0))
        throw ConfigError("--threshold must lie in (0, 1)");
      fs::path in = label_trees_in;
      if (fs::is_directory(in)) in /= "trees.jsonl";
      std::vector<ReasonTree> trees;
      for (const Json& j : read_jsonl(in)) trees.push_back(tree_from_json(j));
      const LabelOutput out = label_trees(trees, threshold, min_std);
      std::vector<Json> lines;
      for (const LabeledSample& s : out.samples) lines.push_back(sample_to_json(s));
      write_lines(need_out(g), lines);
      if (!label_report.empty()) write_json_atomic(label_report, filter_report_to_json(out.report));
      std::printf("kept %zu of %zu trees, %zu samples\n", out.report.retained, out.report.produced,
                  out.samples.size());
    };
  });

  // inject
  auto* inject = app.add_subcommand("inject", "perturb gold chains into labeled negatives");
  std::string inj_gold, inj_tasks, inj_mix;
  inject->add_option("--gold", inj_gold, "gold trajectory JSONL (default: canonical gold chains)");
  inject->add_option("--tasks", inj_tasks, "task JSONL")->required();
  inject->add_option("--mix", inj_mix, "weights, e.g. anchor=1,small=1,large=1,tamper=1");
  inject->callback([&] {
    action = [&] {
      const RunConfig c = base_config(g);
      const TokenVocab vocab(c.vocab);
      const std::vector<Task> all = load_tasks(inj_tasks);
      std::vector<Task> tasks;
      std::vector<Trajectory> gold;
      if (inj_gold.empty()) {
        tasks = all;
        for (const Task& t : tasks) gold.push_back(gold_trajectory(t, vocab));
      } else {
        std::map<std::string, const Task*> by_id;
        for (const Task& t : all) by_id[t.task_id] = &t;
        for (Trajectory& t : load_trajectories(inj_gold)) {
          const auto it = by_id.find(t.task_id);
          if (it == by_id.end())
            throw Error(ErrorCode::kNotFound, "no task for gold chain " + t.task_id);
          tasks.push_back(*it->second);
          gold.push_back(std::move(t));
        }
      }
      PerturbationSpec spec = c.inject;
      spec.seed = c.seed;
      if (!inj_mix.empty()) spec.ratio = parse_mix(inj_mix);
      try {
        validate_perturbation_spec(spec);
      } catch (const Error& e) {
        throw ConfigError(e.what());
      }
      const InjectionResult res = build_injection_set(gold, tasks, vocab, spec);
      std::vector<Json> lines;
      for (const LabeledSample& s : res.samples) lines.push_back(sample_to_json(s));
      write_lines(need_out(g), lines);
      std::printf("%zu samples, %zu skipped\n", res.samples.size(), res.skipped.size());
      for (const InjectionSkip& s : res.skipped) {
        std::fprintf(stderr, "skip %s (%s): %s\n", s.task_id.c_str(), s.kind.c_str(),
                     s.reason.c_str());
      }
    };
  });

  // train-prm
  auto* train = app.add_subcommand("train-prm", "fit the token-level PRM");
  std::vector<std::string> train_data;
  std::string train_tasks;
  int epochs = -1;
  train->add_option("--data", train_data, "labeled sample JSONL (repeatable)")->required();
  train->add_option("--tasks", train_tasks, "task JSONL covering every sample")->required();
  train->add_option("--epochs", epochs, "passes over the data");
  train->callback([&] {
    action = [&] {
      const RunConfig c = base_config(g);
      PrmTrainConfig pc = c.prm;
      pc.seed = c.seed;
      if (epochs >= 0) pc.epochs = epochs;
      if (pc.epochs < 1) throw ConfigError("--epochs must be >= 1");
      std::vector<LabeledSample> data;
      for (const std::string& f : train_data) {
        for (LabeledSample& s : load_samples(f)) data.push_back(std::move(s));
      }
      PrmTrainReport rep;
      const TinyPrm prm = train_prm(data, load_tasks(train_tasks), TokenVocab(c.vocab), pc, &rep);
      std::string trained_on;
      for (const std::string& f : train_data)
        trained_on += (trained_on.empty() ? "" : "+") + fs::path(f).filename().string();
      write_json_atomic(need_out(g), prm_to_json(prm, trained_on, pc.seed));
      std::printf("loss %.6f", rep.initial_loss);
      for (double l : rep.epoch_loss) std::printf(" -> %.6f", l);
      std::printf("\n");
    };
  });

  // align
  auto* al = app.add_subcommand("align", "GRPO-family alignment of a toy policy");
  std::string al_tasks, al_policy, al_prm = "oracle", al_mode = "tree+process";
  double rho = -1, gamma = -1, eps = -1;
  int group = -1, steps = -1;
  al->add_option("--tasks", al_tasks, "task JSONL")->required();
  al->add_option("--policy", al_policy, "policy JSON")->required();
  al->add_option("--prm", al_prm, "PRM JSON file, http:// url, or 'oracle'");
  al->add_option("--mode", al_mode,
                 "vanilla | tree | tree+process | chain+process | tree+avg-score");
  al->add_option("--rho", rho, "drop threshold");
  al->add_option("--gamma", gamma, "drop penalty factor");
  al->add_option("--eps", eps, "clip range");
  al->add_option("--g", group, "group size for chain modes");
  al->add_option("--steps", steps, "iterations");
  al->callback([&] {
    action = [&] {
      const RunConfig c = with_stage_seeds(base_config(g));
      AlignConfig ac = c.align.config;
      if (rho >= 0) ac.shaping.rho = rho;
      if (gamma >= 0) ac.shaping.gamma = gamma;
      if (eps >= 0) ac.grpo.epsilon = eps;
      if (group >= 0) ac.grpo.group_size = group;
      if (steps >= 0) ac.grpo.steps = steps;
      AlignMode mode;
      try {
        mode = align_mode_from_name(al_mode);
        validate_grpo_config(ac.grpo);
        validate_shaping_config(ac.shaping);
      } catch (const Error& e) {
        throw ConfigError(e.what());
      }
      if (is_url(al_policy)) throw ConfigError("align needs a trainable local policy file");
      const ToySoftmaxPolicy init = policy_from_json(read_json(al_policy));
      const auto prm = load_prm(al_prm, c);
      const fs::path out = need_out(g);
      std::vector<Json> log;
      const AlignResult res =
          align(init, load_tasks(al_tasks), *prm, ac, mode,
                [&](const IterationMetrics& m) { log.push_back(iteration_to_json(m)); });
      write_lines(out / "metrics.jsonl", log);
      write_json_atomic(out / "policy.json", policy_to_json(res.policy));
      write_json_atomic(out / "summary.json", Json{{"mode", al_mode},
                                                   {"before", eval_summary_to_json(res.before)},
                                                   {"after", eval_summary_to_json(res.after)}});
      std::printf("%s: mean outcome %.4f -> %.4f, length %.2f -> %.2f\n", al_mode.c_str(),
                  res.before.mean_outcome, res.after.mean_outcome, res.before.mean_len,
                  res.after.mean_len);
    };
  });

  // tts
  auto* tts = app.add_subcommand("tts", "test-time scaling curves");
  std::string tts_tasks, tts_policy, tts_prm = "oracle", strategy = "bon";
  std::vector<int> budgets;
  int seeds = -1;
  tts->add_option("--tasks", tts_tasks, "task JSONL")->required();
  tts->add_option("--policy", tts_policy, "policy JSON file or http:// url")->required();
  tts->add_option("--prm", tts_prm, "PRM JSON file, http:// url, or 'oracle'");
  tts->add_option("--strategy", strategy, "greedy | sc | bon | beam");
  tts->add_option("--n", budgets, "budgets (repeat or comma-separate)")->delimiter(',');
  tts->add_option("--seeds", seeds, "seeds per budget");
  tts->callback([&] {
    action = [&] {
      const RunConfig c = with_stage_seeds(base_config(g));
      TtsStrategy s;
      try {
        s = tts_strategy_from_name(strategy);
      } catch (const Error& e) {
        throw ConfigError(e.what());
      }
      if (budgets.empty()) budgets = c.tts.budgets;
      TtsConfig tc = c.tts.config;
      tc.strategy = s;
      for (int n : budgets) {
        tc.budget_n = n;
        try {
          validate_tts_config(tc);
        } catch (const Error& e) {
          throw ConfigError(e.what());
        }
      }
      const auto policy = load_policy(tts_policy, c);
      const auto prm = load_prm(tts_prm, c);
      const ScalingCurve curve = scaling_curve(*policy, *prm, load_tasks(tts_tasks), s, budgets,
                                               seeds > 0 ? seeds : c.tts.seeds, tc, g.jobs);
      Json j = scaling_curve_to_json(curve);
      j["prm"] = tts_prm;
      const fs::path out = need_out(g);
      write_json_atomic(out, j);
      fs::path csv = out;
      csv.replace_extension(".csv");
      write_file_atomic(csv, scaling_curve_to_csv(curve));
      for (const ScalingRow& r : curve.rows)
        std::printf("N=%d %.4f +- %.4f\n", r.n, r.mean, r.stderr_);
    };
  });

  // eval
  auto* ev = app.add_subcommand("eval", "run the full pipeline and write the report");
  ev->callback([&] {
    action = [&] {
      const RunConfig c = base_config(g);
      PipelineOptions opts;
      opts.out_dir = need_out(g);
      opts.resume = g.resume;
      opts.jobs = g.jobs;
      std::string cmd;
      for (int i = 0; i < argc; ++i) cmd += (i ? " " : "") + std::string(argv[i]);
      opts.command = cmd;
      opts.log = log_line;
      run_pipeline(c, opts);
      std::cout << read_file(opts.out_dir / "report.txt");
    };
  });

  // verify
  auto* ver = app.add_subcommand("verify", "recompute a run's report from raw artifacts");
  std::string run_dir;
  ver->add_option("--run", run_dir, "run directory (defaults to --out)");
  ver->callback([&] {
    action = [&] {
      const std::string dir = run_dir.empty() ? need_out(g) : run_dir;
      const std::vector<std::string> problems = verify_run(dir);
      for (const std::string& p : problems) std::cout << "MISMATCH " << p << "\n";
      if (!problems.empty())
        throw Error(ErrorCode::kIo, std::to_string(problems.size()) + " discrepancies");
      std::cout << "verified " << dir << "\n";
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }
  try {
    action();
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const StageFailure& e) {
    std::cerr << e.what() << "\n";
    return kExitStage;
  } catch (const Error& e) {
    std::cerr << (e.code() == ErrorCode::kConfig ? "config error: " : "error: ") << e.what()
              << "\n";
    return e.code() == ErrorCode::kConfig ? kExitConfig : kExitStage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitStage;
  }
  return 0;
}
