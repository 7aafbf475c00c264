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

#include "treealign/pipeline.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <limits>
#include <optional>
#include <sstream>
#include <thread>

namespace treealign {
namespace fs = std::filesystem;

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// NaN does not survive JSON; it is written as null.
Json number_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

Json stage_to_json(const StageRecord& s) {
  return Json{{"name", s.name},
              {"inputs", s.inputs},
              {"outputs", s.outputs},
              {"seconds", s.seconds},
              {"resumed", s.resumed}};
}

std::map<std::string, std::string> digest_map(const Json& j, const std::string& where) {
  if (!j.is_object()) throw Error(ErrorCode::kIo, where + ": expected an object");
  std::map<std::string, std::string> out;
  for (const auto& [k, v] : j.items()) out[k] = json_string(v, where + "." + k);
  return out;
}

std::string mode_dir(AlignMode m) {
  std::string s = align_mode_name(m);
  for (char& c : s) {
    if (c == '+') c = '_';
  }
  return "align/" + s;
}

std::vector<int> budgets_for(TtsStrategy s, const std::vector<int>& budgets) {
  std::vector<int> out;
  for (int n : budgets) {
    if (s == TtsStrategy::kBeamSearch && n % 2 != 0) continue;
    out.push_back(n);
  }
  return out;
}

struct Artifacts {
  static constexpr const char* kTasks = "tasks.jsonl";
  static constexpr const char* kSftTasks = "sft_tasks.jsonl";
  static constexpr const char* kCorpusTasks = "corpus_tasks.jsonl";
  static constexpr const char* kTtsTasks = "tts_tasks.jsonl";
  static constexpr const char* kSftGold = "sft_gold.jsonl";
  static constexpr const char* kPolicy = "policy_sft.json";
  static constexpr const char* kSftReport = "sft_report.json";
  static constexpr const char* kTrees = "trees.jsonl";
  static constexpr const char* kMcts = "prm_mcts.jsonl";
  static constexpr const char* kLabelReport = "label_report.json";
  static constexpr const char* kGold = "gold.jsonl";
  static constexpr const char* kInj = "inj.jsonl";
  static constexpr const char* kInjectReport = "inject_report.json";
  static constexpr const char* kPrm = "prm.json";
  static constexpr const char* kPrmReport = "prm_report.json";
  static constexpr const char* kAlignSummary = "align/summary.json";
  static constexpr const char* kReport = "report.json";
  static constexpr const char* kReportText = "report.txt";
  static constexpr const char* kManifest = "manifest.json";
};

std::vector<LabeledSample> holdout_of(const std::vector<LabeledSample>& inj, double fraction,
                                      std::vector<LabeledSample>* train) {
  const auto cut =
      static_cast<std::size_t>(std::floor(static_cast<double>(inj.size()) * (1.0 - fraction)));
  if (train != nullptr) train->assign(inj.begin(), inj.begin() + static_cast<std::ptrdiff_t>(cut));
  return {inj.begin() + static_cast<std::ptrdiff_t>(cut), inj.end()};
}

Json prm_eval_to_json(const PrmEval& e) {
  return Json{{"auc_large", number_or_null(e.auc_large)},
              {"auc_small", number_or_null(e.auc_small)},
              {"auc_tamper", number_or_null(e.auc_tamper)},
              {"auc_all", number_or_null(e.auc_all)},
              {"samples", e.samples}};
}

std::unique_ptr<Prm> make_prm(const std::string& which, const fs::path& dir,
                              const TokenVocab& vocab) {
  if (which == "oracle") return std::make_unique<OraclePrm>(vocab);
  return std::make_unique<TinyPrm>(prm_from_json(read_json(dir / Artifacts::kPrm)));
}

class Runner {
 public:
  Runner(const RunConfig& cfg, const PipelineOptions& opts) : cfg_(cfg), opts_(opts) {
    manifest_.command = opts.command;
    manifest_.config = config_to_json(cfg);
    manifest_.config_digest = sha256_hex(manifest_.config.dump());
    manifest_.seed = cfg.seed;
    manifest_.version = TREEALIGN_VERSION;
    const fs::path old = opts.out_dir / Artifacts::kManifest;
    if (opts.resume && fs::exists(old)) {
      try {
        RunManifest m = manifest_from_json(read_json(old));
        if (m.config_digest == manifest_.config_digest) previous_ = std::move(m);
      } catch (const Error&) {
        // An unreadable manifest just means nothing is resumable.
      }
    }
  }

  template <typename Body>
  void stage(const std::string& name, const std::vector<std::string>& inputs,
             const std::vector<std::string>& outputs, Body body) {
    const auto t0 = std::chrono::steady_clock::now();
    StageRecord rec;
    rec.name = name;
    try {
      for (const std::string& in : inputs) rec.inputs[in] = file_sha256(opts_.out_dir / in);
      if (resumable(rec, outputs)) {
        rec.resumed = true;
        for (const std::string& out : outputs) rec.outputs[out] = file_sha256(opts_.out_dir / out);
        log("stage " + name + ": up to date, skipped");
      } else {
        log("stage " + name + ": running");
        body();
        for (const std::string& out : outputs) rec.outputs[out] = file_sha256(opts_.out_dir / out);
      }
    } catch (const StageFailure&) {
      throw;
    } catch (const std::exception& e) {
      write_manifest();
      throw StageFailure(name, e.what());
    }
    rec.seconds = seconds_since(t0);
    manifest_.stages.push_back(std::move(rec));
    write_manifest();
  }

  RunManifest finish() { return manifest_; }

  void log(const std::string& s) const {
    if (opts_.log) opts_.log(s);
  }

 private:
  bool resumable(const StageRecord& rec, const std::vector<std::string>& outputs) const {
    if (!previous_) return false;
    for (const StageRecord& old : previous_->stages) {
      if (old.name != rec.name) continue;
      if (old.inputs != rec.inputs) return false;
      if (old.outputs.size() != outputs.size()) return false;
      for (const std::string& out : outputs) {
        const auto it = old.outputs.find(out);
        if (it == old.outputs.end()) return false;
        const fs::path p = opts_.out_dir / out;
        if (!fs::exists(p) || file_sha256(p) != it->second) return false;
      }
      return true;
    }
    return false;
  }

  void write_manifest() {
    manifest_.wall_clock = seconds_since(start_);
    write_json_atomic(opts_.out_dir / Artifacts::kManifest, manifest_to_json(manifest_));
  }

  const RunConfig& cfg_;
  const PipelineOptions& opts_;
  RunManifest manifest_;
  std::optional<RunManifest> previous_;
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

void write_tasks(const fs::path& p, const std::vector<Task>& tasks) {
  std::vector<Json> lines;
  lines.reserve(tasks.size());
  for (const Task& t : tasks) lines.push_back(task_to_json(t));
  write_jsonl_atomic(p, lines);
}

void write_samples(const fs::path& p, const std::vector<LabeledSample>& samples) {
  std::vector<Json> lines;
  lines.reserve(samples.size());
  for (const LabeledSample& s : samples) lines.push_back(sample_to_json(s));
  write_jsonl_atomic(p, lines);
}

}  // namespace

Json manifest_to_json(const RunManifest& m) {
  Json stages = Json::array();
  for (const StageRecord& s : m.stages) stages.push_back(stage_to_json(s));
  return Json{{"command", m.command},
              {"config", m.config},
              {"config_digest", m.config_digest},
              {"seed", m.seed},
              {"version", m.version},
              {"stages", stages},
              {"wall_clock", m.wall_clock}};
}

RunManifest manifest_from_json(const Json& j) {
  JsonFields f(j, "manifest");
  RunManifest m;
  m.command = json_string(f.req("command"), "manifest.command");
  m.config = f.req("config");
  m.config_digest = json_string(f.req("config_digest"), "manifest.config_digest");
  m.seed = json_u64(f.req("seed"), "manifest.seed");
  m.version = json_string(f.req("version"), "manifest.version");
  m.wall_clock = json_number(f.req("wall_clock"), "manifest.wall_clock");
  const Json& stages = f.req("stages");
  if (!stages.is_array()) throw Error(ErrorCode::kIo, "manifest.stages: expected an array");
  for (const Json& sj : stages) {
    JsonFields sf(sj, "manifest.stages[]");
    StageRecord s;
    s.name = json_string(sf.req("name"), "stage.name");
    s.inputs = digest_map(sf.req("inputs"), "stage.inputs");
    s.outputs = digest_map(sf.req("outputs"), "stage.outputs");
    s.seconds = json_number(sf.req("seconds"), "stage.seconds");
    s.resumed = json_bool(sf.req("resumed"), "stage.resumed");
    sf.finish();
    m.stages.push_back(std::move(s));
  }
  f.finish();
  return m;
}

std::map<std::string, std::string> output_digests(const RunManifest& m) {
  std::map<std::string, std::string> out;
  for (const StageRecord& s : m.stages) out.insert(s.outputs.begin(), s.outputs.end());
  return out;
}

std::vector<ReasonTree> build_trees(const Policy& policy, const std::vector<Task>& tasks,
                                    const TreeConfig& cfg, int jobs) {
  std::vector<std::optional<ReasonTree>> slots(tasks.size());
  std::vector<std::string> errors(tasks.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < tasks.size(); i = next++) {
      TreeConfig c = cfg;
      c.seed = derive_seed(cfg.seed, i);
      try {
        slots[i] = build_tree(policy, tasks[i], c);
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };
  std::vector<std::thread> pool;
  for (int w = 1; w < jobs; ++w) pool.emplace_back(work);
  work();
  for (std::thread& t : pool) t.join();
  std::vector<ReasonTree> out;
  out.reserve(tasks.size());
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    if (!slots[i]) throw Error(ErrorCode::kDegenerateTask, tasks[i].task_id + ": " + errors[i]);
    out.push_back(std::move(*slots[i]));
  }
  return out;
}

LabelOutput label_trees(const std::vector<ReasonTree>& trees, double threshold, double min_std) {
  std::vector<CorrectnessGroup> groups;
  groups.reserve(trees.size());
  for (const ReasonTree& t : trees) groups.push_back(tree_correctness(t));
  LabelOutput out;
  out.report = variance_filter(groups, min_std);
  for (std::size_t i = 0; i < trees.size(); ++i) {
    if (!out.report.groups[i].retained) continue;
    for (LabeledSample& s : label_tokens(trees[i], mc_values(trees[i]), threshold)) {
      out.samples.push_back(std::move(s));
    }
  }
  return out;
}

Json filter_report_to_json(const FilterReport& r) {
  Json groups = Json::array();
  for (const GroupVerdict& g : r.groups) {
    groups.push_back({{"id", g.id},
                      {"size", g.size},
                      {"std", g.std},
                      {"retained", g.retained},
                      {"reason", g.reason}});
  }
  return Json{{"produced", r.produced}, {"retained", r.retained}, {"groups", groups}};
}

PrmEval evaluate_prm(const Prm& prm, const std::vector<LabeledSample>& holdout,
                     const std::vector<Task>& tasks) {
  std::vector<LabeledSample> large, small, tamper;
  for (const LabeledSample& s : holdout) {
    if (s.source == SampleSource::kAnchor) {
      large.push_back(s);
      small.push_back(s);
      tamper.push_back(s);
    } else if (s.detail == "large") {
      large.push_back(s);
    } else if (s.detail == "small") {
      small.push_back(s);
    } else if (s.detail == "tamper") {
      tamper.push_back(s);
    }
  }
  PrmEval e;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  e.auc_large = large.empty() ? nan : token_auc(prm, large, tasks);
  e.auc_small = small.empty() ? nan : token_auc(prm, small, tasks);
  e.auc_tamper = tamper.empty() ? nan : token_auc(prm, tamper, tasks);
  e.auc_all = holdout.empty() ? nan : token_auc(prm, holdout, tasks);
  e.samples = holdout.size();
  return e;
}

ToySoftmaxPolicy train_sft_policy(const std::vector<Task>& tasks, const TokenVocab& vocab,
                                  int steps, double lr, SftReport* report) {
  std::vector<Trajectory> gold;
  gold.reserve(tasks.size());
  for (const Task& t : tasks) gold.push_back(gold_trajectory(t, vocab));
  ToySoftmaxPolicy policy(vocab);
  SftReport r = sft_train(policy, tasks, gold, steps, lr);
  if (report != nullptr) *report = std::move(r);
  return policy;
}

Json eval_summary_to_json(const EvalSummary& e) {
  return Json{{"mean_outcome", e.mean_outcome},
              {"accuracy", e.accuracy},
              {"mean_len", e.mean_len},
              {"drop_rate", e.drop_rate}};
}

Json iteration_to_json(const IterationMetrics& m) {
  return Json{
      {"iter", m.iter},         {"mean_reward", m.mean_reward}, {"mean_outcome", m.mean_outcome},
      {"mean_len", m.mean_len}, {"drop_rate", m.drop_rate},     {"loss", m.loss}};
}

RunManifest run_pipeline(const RunConfig& config_in, const PipelineOptions& opts) {
  validate_config(config_in);
  if (opts.out_dir.empty()) throw Error(ErrorCode::kConfig, "pipeline needs an output directory");
  fs::create_directories(opts.out_dir);
  const RunConfig cfg = with_stage_seeds(config_in);
  const fs::path dir = opts.out_dir;
  const TokenVocab vocab(cfg.vocab);
  using A = Artifacts;
  Runner run(cfg, opts);
  const std::uint64_t synth_seed = derive_seed(cfg.seed, stage_stream::kSynth);

  run.stage("synth", {}, {A::kTasks, A::kSftTasks, A::kCorpusTasks, A::kTtsTasks}, [&] {
    const GenerationConfig& g = cfg.synth.generation;
    write_tasks(dir / A::kTasks, generate_tasks(derive_seed(synth_seed, 0), cfg.synth.count, g));
    write_tasks(dir / A::kSftTasks, generate_tasks(derive_seed(synth_seed, 1), cfg.sft.tasks, g));
    write_tasks(dir / A::kCorpusTasks,
                generate_tasks(derive_seed(synth_seed, 2),
                               cfg.corpus.tree_tasks + cfg.corpus.gold_tasks, g));
    write_tasks(dir / A::kTtsTasks, generate_tasks(derive_seed(synth_seed, 3), cfg.tts.tasks, g));
  });

  run.stage("sft", {A::kSftTasks}, {A::kSftGold, A::kPolicy, A::kSftReport}, [&] {
    const std::vector<Task> tasks = load_tasks(dir / A::kSftTasks);
    std::vector<Json> gold;
    for (const Task& t : tasks) gold.push_back(trajectory_to_json(gold_trajectory(t, vocab)));
    write_jsonl_atomic(dir / A::kSftGold, gold);
    SftReport rep;
    const ToySoftmaxPolicy policy = train_sft_policy(tasks, vocab, cfg.sft.steps, cfg.sft.lr, &rep);
    write_json_atomic(dir / A::kPolicy, policy_to_json(policy));
    write_json_atomic(dir / A::kSftReport, Json{{"steps", cfg.sft.steps},
                                                {"lr", cfg.sft.lr},
                                                {"initial_loss", rep.losses.front()},
                                                {"final_loss", rep.losses.back()}});
  });

  run.stage("tree", {A::kCorpusTasks, A::kPolicy}, {A::kTrees}, [&] {
    std::vector<Task> tasks = load_tasks(dir / A::kCorpusTasks);
    tasks.resize(static_cast<std::size_t>(cfg.corpus.tree_tasks));
    const ToySoftmaxPolicy policy = policy_from_json(read_json(dir / A::kPolicy));
    std::vector<Json> lines;
    for (const ReasonTree& t : build_trees(policy, tasks, cfg.tree, opts.jobs)) {
      lines.push_back(tree_to_json(t));
    }
    write_jsonl_atomic(dir / A::kTrees, lines);
  });

  run.stage("label", {A::kTrees}, {A::kMcts, A::kLabelReport}, [&] {
    std::vector<ReasonTree> trees;
    for (const Json& j : read_jsonl(dir / A::kTrees)) trees.push_back(tree_from_json(j));
    const LabelOutput out = label_trees(trees, cfg.corpus.threshold, cfg.corpus.min_std);
    write_samples(dir / A::kMcts, out.samples);
    Json rep = filter_report_to_json(out.report);
    rep["samples"] = out.samples.size();
    rep["threshold"] = cfg.corpus.threshold;
    rep["min_std"] = cfg.corpus.min_std;
    write_json_atomic(dir / A::kLabelReport, rep);
  });

  run.stage("inject", {A::kCorpusTasks}, {A::kGold, A::kInj, A::kInjectReport}, [&] {
    std::vector<Task> tasks = load_tasks(dir / A::kCorpusTasks);
    tasks.erase(tasks.begin(), tasks.begin() + cfg.corpus.tree_tasks);
    std::vector<Trajectory> gold;
    std::vector<Json> gold_lines;
    for (const Task& t : tasks) {
      gold.push_back(gold_trajectory(t, vocab));
      gold_lines.push_back(trajectory_to_json(gold.back()));
    }
    write_jsonl_atomic(dir / A::kGold, gold_lines);
    const InjectionResult res = build_injection_set(gold, tasks, vocab, cfg.inject);
    write_samples(dir / A::kInj, res.samples);
    Json skipped = Json::array();
    for (const InjectionSkip& s : res.skipped) {
      skipped.push_back(
          {{"index", s.index}, {"task_id", s.task_id}, {"kind", s.kind}, {"reason", s.reason}});
    }
    std::map<std::string, std::size_t> produced;
    for (const LabeledSample& s : res.samples) ++produced[s.detail.empty() ? "anchor" : s.detail];
    write_json_atomic(dir / A::kInjectReport,
                      Json{{"planned", res.planned}, {"produced", produced}, {"skipped", skipped}});
  });

  run.stage("train-prm", {A::kCorpusTasks, A::kMcts, A::kInj}, {A::kPrm, A::kPrmReport}, [&] {
    const std::vector<Task> tasks = load_tasks(dir / A::kCorpusTasks);
    std::vector<LabeledSample> data = load_samples(dir / A::kMcts);
    const std::size_t mcts = data.size();
    std::vector<LabeledSample> train;
    const std::vector<LabeledSample> holdout =
        holdout_of(load_samples(dir / A::kInj), cfg.corpus.holdout_fraction, &train);
    data.insert(data.end(), train.begin(), train.end());
    PrmTrainReport rep;
    const TinyPrm prm = train_prm(data, tasks, vocab, cfg.prm, &rep);
    write_json_atomic(dir / A::kPrm, prm_to_json(prm, "prm_mcts.jsonl+inj.jsonl", cfg.prm.seed));
    write_json_atomic(dir / A::kPrmReport,
                      Json{{"initial_loss", rep.initial_loss},
                           {"epoch_loss", rep.epoch_loss},
                           {"train_samples", rep.samples},
                           {"mcts_samples", mcts},
                           {"injected_train_samples", train.size()},
                           {"holdout", prm_eval_to_json(evaluate_prm(prm, holdout, tasks))}});
  });

  std::vector<std::string> align_out{A::kAlignSummary};
  for (AlignMode m : cfg.align.modes) {
    align_out.push_back(mode_dir(m) + "/metrics.jsonl");
    align_out.push_back(mode_dir(m) + "/policy.json");
  }
  std::vector<std::string> align_in{A::kTasks, A::kPolicy};
  if (cfg.align.prm == "trained") align_in.emplace_back(A::kPrm);
  run.stage("align", align_in, align_out, [&] {
    const std::vector<Task> tasks = load_tasks(dir / A::kTasks);
    const ToySoftmaxPolicy init = policy_from_json(read_json(dir / A::kPolicy));
    const std::unique_ptr<Prm> prm = make_prm(cfg.align.prm, dir, vocab);
    Json summary = Json::object();
    for (AlignMode m : cfg.align.modes) {
      std::vector<Json> log;
      const auto t0 = std::chrono::steady_clock::now();
      const AlignResult res =
          align(init, tasks, *prm, cfg.align.config, m,
                [&](const IterationMetrics& it) { log.push_back(iteration_to_json(it)); });
      write_jsonl_atomic(dir / (mode_dir(m) + "/metrics.jsonl"), log);
      write_json_atomic(dir / (mode_dir(m) + "/policy.json"), policy_to_json(res.policy));
      summary[align_mode_name(m)] = Json{{"before", eval_summary_to_json(res.before)},
                                         {"after", eval_summary_to_json(res.after)}};
      run.log(std::string("  ") + align_mode_name(m) + " done in " +
              std::to_string(seconds_since(t0)) + "s");
    }
    write_json_atomic(dir / A::kAlignSummary, summary);
  });

  std::vector<std::string> tts_out;
  for (TtsStrategy s : cfg.tts.strategies) {
    tts_out.push_back(std::string("tts/") + tts_strategy_name(s) + ".json");
    tts_out.push_back(std::string("tts/") + tts_strategy_name(s) + ".csv");
  }
  std::vector<std::string> tts_in{A::kTtsTasks, A::kPolicy};
  if (cfg.tts.prm == "trained") tts_in.emplace_back(A::kPrm);
  run.stage("tts", tts_in, tts_out, [&] {
    const std::vector<Task> tasks = load_tasks(dir / A::kTtsTasks);
    const ToySoftmaxPolicy policy = policy_from_json(read_json(dir / A::kPolicy));
    const std::unique_ptr<Prm> prm = make_prm(cfg.tts.prm, dir, vocab);
    for (TtsStrategy s : cfg.tts.strategies) {
      const ScalingCurve curve =
          scaling_curve(policy, *prm, tasks, s, budgets_for(s, cfg.tts.budgets), cfg.tts.seeds,
                        cfg.tts.config, opts.jobs);
      Json j = scaling_curve_to_json(curve);
      j["prm"] = cfg.tts.prm;
      write_json_atomic(dir / (std::string("tts/") + tts_strategy_name(s) + ".json"), j);
      write_file_atomic(dir / (std::string("tts/") + tts_strategy_name(s) + ".csv"),
                        scaling_curve_to_csv(curve));
    }
  });

  std::vector<std::string> eval_in{A::kSftReport, A::kLabelReport, A::kInjectReport, A::kPrmReport,
                                   A::kAlignSummary};
  for (TtsStrategy s : cfg.tts.strategies) {
    eval_in.push_back(std::string("tts/") + tts_strategy_name(s) + ".json");
  }
  run.stage("eval", eval_in, {A::kReport, A::kReportText}, [&] {
    const Json report = eval_report(dir);
    write_json_atomic(dir / A::kReport, report);
    write_file_atomic(dir / A::kReportText, render_report(report));
  });
  return run.finish();
}

namespace {

std::optional<Json> try_read(const fs::path& dir, const std::string& rel, Json& missing) {
  const fs::path p = dir / rel;
  if (!fs::exists(p)) {
    missing.push_back(rel);
    return std::nullopt;
  }
  return read_json(p);
}

double get_or_nan(const Json& j) {
  return j.is_number() ? j.get<double>() : std::numeric_limits<double>::quiet_NaN();
}

}  // namespace

Json eval_report(const fs::path& run_dir) {
  using A = Artifacts;
  Json missing = Json::array();
  Json report = Json::object();
  if (!fs::exists(run_dir / A::kManifest)) missing.push_back(A::kManifest);
  if (auto j = try_read(run_dir, A::kSftReport, missing)) report["sft"] = *j;
  if (auto j = try_read(run_dir, A::kLabelReport, missing)) {
    report["label"] = Json{
        {"trees", (*j)["produced"]}, {"retained", (*j)["retained"]}, {"samples", (*j)["samples"]}};
  }
  if (auto j = try_read(run_dir, A::kInjectReport, missing)) {
    report["inject"] = Json{{"produced", (*j)["produced"]}, {"skipped", (*j)["skipped"].size()}};
  }
  if (auto j = try_read(run_dir, A::kPrmReport, missing)) {
    report["prm"] = Json{{"epoch_loss", (*j)["epoch_loss"]}, {"holdout", (*j)["holdout"]}};
  }
  Json checks = Json::object();
  if (auto j = try_read(run_dir, A::kAlignSummary, missing)) {
    Json rows = Json::array();
    bool improves = true;
    for (AlignMode m : all_align_modes()) {
      const std::string name = align_mode_name(m);
      if (!j->contains(name)) {
        missing.push_back(std::string(A::kAlignSummary) + "#" + name);
        continue;
      }
      const Json& r = (*j)[name];
      rows.push_back(Json{{"mode", name}, {"before", r["before"]}, {"after", r["after"]}});
      improves = improves && r["after"]["mean_outcome"].get<double>() >
                                 r["before"]["mean_outcome"].get<double>();
    }
    report["align"] = rows;
    checks["align_every_mode_improves"] = improves;
    auto outcome = [&](const char* m) { return (*j)[m]["after"]["mean_outcome"].get<double>(); };
    if (j->contains("vanilla") && j->contains("tree") && j->contains("tree+process")) {
      checks["align_order_process_tree_vanilla"] =
          outcome("tree+process") >= outcome("tree") && outcome("tree") >= outcome("vanilla");
    }
    if (j->contains("tree+avg-score") && j->contains("tree+process")) {
      const double ratio = (*j)["tree+avg-score"]["after"]["mean_len"].get<double>() /
                           (*j)["tree+process"]["after"]["mean_len"].get<double>();
      checks["avg_score_length_ratio"] = ratio;
    }
  }
  Json tts = Json::object();
  for (TtsStrategy s : {TtsStrategy::kGreedy, TtsStrategy::kSelfConsistency, TtsStrategy::kBestOfN,
                        TtsStrategy::kBeamSearch}) {
    const std::string rel = std::string("tts/") + tts_strategy_name(s) + ".json";
    if (auto j = try_read(run_dir, rel, missing)) {
      Json rows = Json::array();
      for (const Json& b : (*j)["budgets"])
        rows.push_back({{"n", b["n"]}, {"mean", b["mean"]}, {"stderr", b["stderr"]}});
      tts[tts_strategy_name(s)] = Json{{"prm", (*j)["prm"]}, {"budgets", rows}};
    }
  }
  report["tts"] = tts;
  if (report.contains("prm")) {
    const Json& h = report["prm"]["holdout"];
    checks["prm_auc_large"] = h["auc_large"];
    checks["prm_auc_small"] = h["auc_small"];
    checks["prm_auc_large_ge_small"] = get_or_nan(h["auc_large"]) >= get_or_nan(h["auc_small"]);
  }
  report["checks"] = checks;
  report["missing"] = missing;
  return report;
}

std::string render_report(const Json& report) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(4);
  auto num = [&](const Json& j) -> std::string {
    if (!j.is_number()) return "n/a";
    std::ostringstream s;
    s << std::fixed << std::setprecision(4) << j.get<double>();
    return s.str();
  };
  if (report.contains("prm")) {
    const Json& h = report["prm"]["holdout"];
    out << "PRM held-out token AUC: large " << num(h["auc_large"]) << "  small "
        << num(h["auc_small"]) << "  tamper " << num(h["auc_tamper"]) << "  all "
        << num(h["auc_all"]) << "\n\n";
  }
  if (report.contains("align")) {
    out << "Alignment (mean outcome / accuracy / length / drop rate)\n";
    out << std::left << std::setw(16) << "mode" << std::setw(12) << "before" << std::setw(12)
        << "after" << std::setw(12) << "accuracy" << std::setw(12) << "length" << "drop\n";
    for (const Json& r : report["align"]) {
      out << std::left << std::setw(16) << r["mode"].get<std::string>() << std::setw(12)
          << num(r["before"]["mean_outcome"]) << std::setw(12) << num(r["after"]["mean_outcome"])
          << std::setw(12) << num(r["after"]["accuracy"]) << std::setw(12)
          << num(r["after"]["mean_len"]) << num(r["after"]["drop_rate"]) << "\n";
    }
    out << "\n";
  }
  if (report.contains("tts")) {
    out << "Test-time scaling (accuracy mean +- stderr over seeds)\n";
    for (const auto& [name, t] : report["tts"].items()) {
      out << "  " << name << " (prm " << t["prm"].get<std::string>() << "):";
      for (const Json& b : t["budgets"]) {
        out << "  N=" << b["n"].get<int>() << " " << num(b["mean"]) << "+-" << num(b["stderr"]);
      }
      out << "\n";
    }
    out << "\n";
  }
  out << "checks: " << report["checks"].dump() << "\n";
  if (!report["missing"].empty()) out << "missing: " << report["missing"].dump() << "\n";
  return out.str();
}

std::vector<std::string> verify_run(const fs::path& run_dir) {
  using A = Artifacts;
  std::vector<std::string> problems;
  RunManifest m;
  try {
    m = manifest_from_json(read_json(run_dir / A::kManifest));
  } catch (const Error& e) {
    return {std::string("manifest unreadable: ") + e.what()};
  }
  for (const auto& [rel, digest] : output_digests(m)) {
    const fs::path p = run_dir / rel;
    if (!fs::exists(p)) {
      problems.push_back("missing artifact " + rel);
    } else if (file_sha256(p) != digest) {
      problems.push_back("digest mismatch for " + rel);
    }
  }
  if (!problems.empty()) return problems;

  const RunConfig cfg = with_stage_seeds(config_from_json(m.config));
  const TokenVocab vocab(cfg.vocab);
  auto differs = [&](const std::string& what, const Json& recorded, const Json& recomputed) {
    if (recorded != recomputed) {
      problems.push_back(what + ": recorded " + recorded.dump() + " recomputed " +
                         recomputed.dump());
    }
  };
  try {
    differs("report.json", read_json(run_dir / A::kReport), eval_report(run_dir));

    const std::vector<Task> corpus = load_tasks(run_dir / A::kCorpusTasks);
    const std::vector<LabeledSample> holdout =
        holdout_of(load_samples(run_dir / A::kInj), cfg.corpus.holdout_fraction, nullptr);
    const TinyPrm prm = prm_from_json(read_json(run_dir / A::kPrm));
    differs("prm holdout AUC", read_json(run_dir / A::kPrmReport)["holdout"],
            prm_eval_to_json(evaluate_prm(prm, holdout, corpus)));

    const std::vector<Task> tasks = load_tasks(run_dir / A::kTasks);
    const Json summary = read_json(run_dir / A::kAlignSummary);
    const std::unique_ptr<Prm> align_prm = make_prm(cfg.align.prm, run_dir, vocab);
    const AlignConfig& ac = cfg.align.config;
    for (AlignMode mode : cfg.align.modes) {
      const ToySoftmaxPolicy p =
          policy_from_json(read_json(run_dir / (mode_dir(mode) + "/policy.json")));
      const EvalSummary e = evaluate_policy(p, tasks, ac.eval_samples, ac.rollout_temperature,
                                            ac.eval_seed, align_prm.get(), ac.shaping);
      differs(std::string("align ") + align_mode_name(mode),
              summary[align_mode_name(mode)]["after"], eval_summary_to_json(e));
    }

    for (TtsStrategy s : cfg.tts.strategies) {
      const Json j = read_json(run_dir / (std::string("tts/") + tts_strategy_name(s) + ".json"));
      for (const Json& b : j["budgets"]) {
        ScalingRow row;
        row.per_seed = json_number_array(b["per_seed"], "per_seed");
        const double mean = mean_score(row.per_seed);
        differs(
            std::string("tts ") + tts_strategy_name(s) + " N=" + std::to_string(b["n"].get<int>()),
            b["mean"], Json(mean));
      }
    }
  } catch (const std::exception& e) {
    problems.push_back(std::string("verification aborted: ") + e.what());
  }
  return problems;
}

}  // namespace treealign
