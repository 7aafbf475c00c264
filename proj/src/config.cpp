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

#include "treealign/config.hpp"

#include <functional>

namespace treealign {
namespace {

// Wraps kIo decoding errors from the json helpers as config errors.
template <typename F>
auto as_config(F f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kConfig) throw;
    throw Error(ErrorCode::kConfig, e.what());
  }
}

class Section {
 public:
  Section(const Json& j, const std::string& name) : fields_(j, name), name_(name) {}

  template <typename T, typename Get>
  void field(const std::string& key, T& out, Get get) {
    if (const Json* v = fields_.opt(key)) out = get(*v, name_ + "." + key);
  }
  void integer(const std::string& key, int& out) { field(key, out, json_int); }
  void number(const std::string& key, double& out) { field(key, out, json_number); }
  void boolean(const std::string& key, bool& out) { field(key, out, json_bool); }
  void string(const std::string& key, std::string& out) { field(key, out, json_string); }
  const Json* sub(const std::string& key) { return fields_.opt(key); }
  void finish() const { fields_.finish(); }
  std::string path(const std::string& key) const { return name_ + "." + key; }

 private:
  JsonFields fields_;
  std::string name_;
};

std::vector<std::string> string_list(const Json& j, const std::string& where) {
  if (!j.is_array()) throw Error(ErrorCode::kConfig, where + ": expected an array");
  std::vector<std::string> out;
  for (const Json& s : j) out.push_back(json_string(s, where + "[]"));
  return out;
}

const char* norm_name(LossNormalization n) {
  return n == LossNormalization::kSequenceLength ? "sequence-length" : "masked-count";
}

LossNormalization norm_from(const std::string& s, const std::string& where) {
  if (s == "sequence-length") return LossNormalization::kSequenceLength;
  if (s == "masked-count") return LossNormalization::kMaskedCount;
  throw Error(ErrorCode::kConfig, where + ": unknown loss normalization '" + s + "'");
}

const char* pooling_name(StepPooling p) { return p == StepPooling::kMean ? "mean" : "min"; }

StepPooling pooling_from(const std::string& s, const std::string& where) {
  if (s == "mean") return StepPooling::kMean;
  if (s == "min") return StepPooling::kMin;
  throw Error(ErrorCode::kConfig, where + ": unknown step pooling '" + s + "'");
}

const char* aggregate_name(BeamAggregate a) { return a == BeamAggregate::kMean ? "mean" : "min"; }

BeamAggregate aggregate_from(const std::string& s, const std::string& where) {
  if (s == "mean") return BeamAggregate::kMean;
  if (s == "min") return BeamAggregate::kMin;
  throw Error(ErrorCode::kConfig, where + ": unknown beam aggregate '" + s + "'");
}

Json generation_to_json(const GenerationConfig& g) {
  return Json{{"width", g.width},
              {"height", g.height},
              {"min_objects", g.min_objects},
              {"max_objects", g.max_objects},
              {"min_box", g.min_box},
              {"max_box", g.max_box},
              {"ground_fraction", g.ground_fraction},
              {"classes", g.classes},
              {"colors", g.colors}};
}

GenerationConfig generation_from_json(const Json& j, const std::string& name) {
  GenerationConfig g;
  Section s(j, name);
  s.integer("width", g.width);
  s.integer("height", g.height);
  s.integer("min_objects", g.min_objects);
  s.integer("max_objects", g.max_objects);
  s.integer("min_box", g.min_box);
  s.integer("max_box", g.max_box);
  s.number("ground_fraction", g.ground_fraction);
  if (const Json* v = s.sub("classes")) g.classes = string_list(*v, s.path("classes"));
  if (const Json* v = s.sub("colors")) g.colors = string_list(*v, s.path("colors"));
  s.finish();
  return g;
}

}  // namespace

RunConfig config_from_json(const Json& j) {
  return as_config([&] {
    RunConfig c;
    JsonFields top(j, "config");
    if (const Json* v = top.opt("seed")) c.seed = json_u64(*v, "config.seed");
    if (const Json* v = top.opt("vocab")) c.vocab = vocab_config_from_json(*v);

    if (const Json* v = top.opt("synth")) {
      Section s(*v, "synth");
      s.integer("count", c.synth.count);
      if (const Json* g = s.sub("generation"))
        c.synth.generation = generation_from_json(*g, "synth.generation");
      s.finish();
    }
    if (const Json* v = top.opt("sft")) {
      Section s(*v, "sft");
      s.integer("tasks", c.sft.tasks);
      s.integer("steps", c.sft.steps);
      s.number("lr", c.sft.lr);
      s.finish();
    }
    if (const Json* v = top.opt("tree")) {
      if (v->is_object() && v->contains("seed")) {
        throw Error(ErrorCode::kConfig,
                    "tree: unknown key 'seed' (stage seeds derive from the run seed)");
      }
      c.tree = tree_config_from_json(*v);
    }
    if (const Json* v = top.opt("corpus")) {
      Section s(*v, "corpus");
      s.integer("tree_tasks", c.corpus.tree_tasks);
      s.integer("gold_tasks", c.corpus.gold_tasks);
      s.number("holdout_fraction", c.corpus.holdout_fraction);
      s.number("threshold", c.corpus.threshold);
      s.number("min_std", c.corpus.min_std);
      s.finish();
    }
    if (const Json* v = top.opt("inject")) {
      Section s(*v, "inject");
      s.number("small_lo", c.inject.small_lo);
      s.number("small_hi", c.inject.small_hi);
      s.integer("large_attempts", c.inject.large_attempts);
      if (const Json* r = s.sub("ratio")) {
        if (!r->is_object()) throw Error(ErrorCode::kConfig, "inject.ratio: expected an object");
        c.inject.ratio.clear();
        for (const auto& [k, w] : r->items())
          c.inject.ratio[k] = json_number(w, "inject.ratio." + k);
      }
      s.finish();
    }
    if (const Json* v = top.opt("prm")) {
      Section s(*v, "prm");
      s.number("lr", c.prm.lr);
      s.integer("epochs", c.prm.epochs);
      s.integer("batch", c.prm.batch);
      std::string norm = norm_name(c.prm.norm);
      s.string("norm", norm);
      c.prm.norm = norm_from(norm, "prm.norm");
      s.finish();
    }
    if (const Json* v = top.opt("align")) {
      Section s(*v, "align");
      AlignConfig& a = c.align.config;
      if (const Json* m = s.sub("modes")) {
        c.align.modes.clear();
        for (const std::string& name : string_list(*m, "align.modes")) {
          try {
            c.align.modes.push_back(align_mode_from_name(name));
          } catch (const Error&) {
            throw Error(ErrorCode::kConfig, "align.modes: unknown mode '" + name + "'");
          }
        }
      }
      s.string("prm", c.align.prm);
      s.integer("steps", a.grpo.steps);
      s.number("lr", a.grpo.lr);
      s.number("epsilon", a.grpo.epsilon);
      s.integer("group_size", a.grpo.group_size);
      s.integer("inner_epochs", a.grpo.inner_epochs);
      s.integer("batch_tasks", a.batch_tasks);
      s.number("rollout_temperature", a.rollout_temperature);
      s.integer("eval_samples", a.eval_samples);
      s.number("rho", a.shaping.rho);
      s.number("gamma", a.shaping.gamma);
      s.boolean("strict", a.shaping.strict);
      std::string pooling = pooling_name(a.shaping.pooling);
      s.string("pooling", pooling);
      a.shaping.pooling = pooling_from(pooling, "align.pooling");
      s.finish();
    }
    if (const Json* v = top.opt("tts")) {
      Section s(*v, "tts");
      if (const Json* m = s.sub("strategies")) {
        c.tts.strategies.clear();
        for (const std::string& name : string_list(*m, "tts.strategies")) {
          try {
            c.tts.strategies.push_back(tts_strategy_from_name(name));
          } catch (const Error&) {
            throw Error(ErrorCode::kConfig, "tts.strategies: unknown strategy '" + name + "'");
          }
        }
      }
      if (const Json* b = s.sub("budgets")) c.tts.budgets = json_int_array(*b, "tts.budgets");
      s.integer("seeds", c.tts.seeds);
      s.integer("tasks", c.tts.tasks);
      s.string("prm", c.tts.prm);
      s.number("temperature", c.tts.config.temperature);
      s.number("top_p", c.tts.config.top_p);
      s.integer("max_steps", c.tts.config.max_steps);
      s.integer("beam_fanout", c.tts.config.beam_fanout);
      std::string agg = aggregate_name(c.tts.config.beam_aggregate);
      s.string("beam_aggregate", agg);
      c.tts.config.beam_aggregate = aggregate_from(agg, "tts.beam_aggregate");
      s.finish();
    }
    top.finish();
    validate_config(c);
    return c;
  });
}

Json config_to_json(const RunConfig& c) {
  Json tree = tree_config_to_json(c.tree);
  tree.erase("seed");
  std::vector<std::string> modes;
  for (AlignMode m : c.align.modes) modes.emplace_back(align_mode_name(m));
  std::vector<std::string> strategies;
  for (TtsStrategy s : c.tts.strategies) strategies.emplace_back(tts_strategy_name(s));
  const AlignConfig& a = c.align.config;
  return Json{
      {"seed", c.seed},
      {"vocab", vocab_config_to_json(c.vocab)},
      {"synth", {{"count", c.synth.count}, {"generation", generation_to_json(c.synth.generation)}}},
      {"sft", {{"tasks", c.sft.tasks}, {"steps", c.sft.steps}, {"lr", c.sft.lr}}},
      {"tree", tree},
      {"corpus",
       {{"tree_tasks", c.corpus.tree_tasks},
        {"gold_tasks", c.corpus.gold_tasks},
        {"holdout_fraction", c.corpus.holdout_fraction},
        {"threshold", c.corpus.threshold},
        {"min_std", c.corpus.min_std}}},
      {"inject",
       {{"small_lo", c.inject.small_lo},
        {"small_hi", c.inject.small_hi},
        {"large_attempts", c.inject.large_attempts},
        {"ratio", c.inject.ratio}}},
      {"prm",
       {{"lr", c.prm.lr},
        {"epochs", c.prm.epochs},
        {"batch", c.prm.batch},
        {"norm", norm_name(c.prm.norm)}}},
      {"align",
       {{"modes", modes},
        {"prm", c.align.prm},
        {"steps", a.grpo.steps},
        {"lr", a.grpo.lr},
        {"epsilon", a.grpo.epsilon},
        {"group_size", a.grpo.group_size},
        {"inner_epochs", a.grpo.inner_epochs},
        {"batch_tasks", a.batch_tasks},
        {"rollout_temperature", a.rollout_temperature},
        {"eval_samples", a.eval_samples},
        {"rho", a.shaping.rho},
        {"gamma", a.shaping.gamma},
        {"strict", a.shaping.strict},
        {"pooling", pooling_name(a.shaping.pooling)}}},
      {"tts",
       {{"strategies", strategies},
        {"budgets", c.tts.budgets},
        {"seeds", c.tts.seeds},
        {"tasks", c.tts.tasks},
        {"prm", c.tts.prm},
        {"temperature", c.tts.config.temperature},
        {"top_p", c.tts.config.top_p},
        {"max_steps", c.tts.config.max_steps},
        {"beam_fanout", c.tts.config.beam_fanout},
        {"beam_aggregate", aggregate_name(c.tts.config.beam_aggregate)}}}};
}

RunConfig load_config(const std::filesystem::path& path) {
  Json j;
  try {
    j = read_json(path);
  } catch (const Error& e) {
    throw Error(ErrorCode::kConfig, e.what());
  }
  return config_from_json(j);
}

void validate_config(const RunConfig& c) {
  auto check = [](bool ok, const std::string& what) {
    if (!ok) throw Error(ErrorCode::kConfig, what);
  };
  auto module = [](const std::function<void()>& f) {
    try {
      f();
    } catch (const Error& e) {
      throw Error(ErrorCode::kConfig, e.what());
    }
  };
  check(c.synth.count >= 1, "synth.count must be >= 1");
  check(c.sft.tasks >= 1 && c.sft.steps >= 0 && c.sft.lr > 0.0,
        "sft: tasks >= 1, steps >= 0, lr > 0");
  check(c.corpus.tree_tasks >= 0 && c.corpus.gold_tasks >= 0, "corpus task counts must be >= 0");
  check(c.corpus.holdout_fraction >= 0.0 && c.corpus.holdout_fraction < 1.0,
        "corpus.holdout_fraction must lie in [0, 1)");
  check(c.corpus.threshold > 0.0 && c.corpus.threshold < 1.0,
        "corpus.threshold must lie in (0, 1)");
  check(c.corpus.min_std >= 0.0, "corpus.min_std must be >= 0");
  check(c.prm.epochs >= 1 && c.prm.batch >= 1 && c.prm.lr > 0.0,
        "prm: epochs >= 1, batch >= 1, lr > 0");
  check(c.align.prm == "trained" || c.align.prm == "oracle",
        "align.prm must be 'trained' or 'oracle'");
  check(c.tts.prm == "trained" || c.tts.prm == "oracle", "tts.prm must be 'trained' or 'oracle'");
  check(!c.tts.budgets.empty() && c.tts.seeds >= 1 && c.tts.tasks >= 1,
        "tts: budgets nonempty, seeds >= 1, tasks >= 1");
  check(c.align.config.batch_tasks >= 1 && c.align.config.eval_samples >= 1,
        "align: batch_tasks and eval_samples must be >= 1");
  module([&] { validate_tree_config(c.tree); });
  module([&] { validate_perturbation_spec(c.inject); });
  module([&] { validate_grpo_config(c.align.config.grpo); });
  module([&] { validate_shaping_config(c.align.config.shaping); });
  module([&] { TokenVocab v(c.vocab); });
  for (TtsStrategy s : c.tts.strategies) {
    for (int n : c.tts.budgets) {
      // Beam search runs only the even budgets.
      if (s == TtsStrategy::kBeamSearch && n % 2 != 0) continue;
      TtsConfig t = c.tts.config;
      t.strategy = s;
      t.budget_n = n;
      module([&] { validate_tts_config(t); });
    }
  }
}

RunConfig with_stage_seeds(RunConfig c) {
  c.tree.seed = derive_seed(c.seed, stage_stream::kTree);
  c.inject.seed = derive_seed(c.seed, stage_stream::kInject);
  c.prm.seed = derive_seed(c.seed, stage_stream::kPrm);
  c.align.config.grpo.seed = derive_seed(c.seed, stage_stream::kAlign);
  c.align.config.eval_seed = derive_seed(derive_seed(c.seed, stage_stream::kAlign), 1);
  c.tts.config.seed = derive_seed(c.seed, stage_stream::kTts);
  return c;
}

}  // namespace treealign
