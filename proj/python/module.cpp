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

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "treealign/alignment.hpp"
#include "treealign/io.hpp"
#include "treealign/mc_labeler.hpp"
#include "treealign/pipeline.hpp"
#include "treealign/toy_env.hpp"

namespace py = pybind11;
using namespace treealign;

// Records cross the boundary as JSON text; the python side decodes them.
namespace {

std::string dump(const Json& j) { return j.dump(); }

std::vector<std::string> tasks(std::uint64_t seed, int count, const std::string& config) {
  const RunConfig c = config_from_json(Json::parse(config.empty() ? "{}" : config));
  std::vector<std::string> out;
  for (const Task& t : generate_tasks(seed, count, c.synth.generation))
    out.push_back(dump(task_to_json(t)));
  return out;
}

std::string gold(const std::string& task) {
  return dump(trajectory_to_json(gold_trajectory(task_from_json(Json::parse(task)), TokenVocab{})));
}

std::string tree(const std::string& task, const std::string& policy, const std::string& config) {
  const Task t = task_from_json(Json::parse(task));
  const TreeConfig tc = tree_config_from_json(Json::parse(config));
  const ToySoftmaxPolicy p =
      policy.empty() ? ToySoftmaxPolicy(TokenVocab{}) : policy_from_json(Json::parse(policy));
  return dump(tree_to_json(build_tree(p, t, tc)));
}

std::vector<std::tuple<int, long, long, double>> values(const std::string& tree) {
  std::vector<std::tuple<int, long, long, double>> out;
  for (const McValue& v : mc_values(tree_from_json(Json::parse(tree)))) {
    out.emplace_back(v.node_id, v.successes, v.total, v.value);
  }
  return out;
}

py::tuple drop(const std::vector<double>& scores, double rho) {
  const DropMoment d = drop_moment(scores, rho);
  return py::make_tuple(d.delta, d.index ? py::cast(*d.index) : py::none(), d.triggered);
}

std::string pipeline(const std::string& config, const std::string& out_dir, bool resume, int jobs) {
  PipelineOptions o;
  o.out_dir = out_dir;
  o.resume = resume;
  o.jobs = jobs;
  o.command = "python";
  return dump(manifest_to_json(run_pipeline(config_from_json(Json::parse(config)), o)));
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "treealign core bindings (JSON text in, JSON text out)";
  m.attr("__version__") = TREEALIGN_VERSION;

  py::register_exception<Error>(m, "TreeAlignError", PyExc_RuntimeError);

  m.def("generate_tasks", &tasks, py::arg("seed"), py::arg("count"), py::arg("config") = "");
  m.def("gold_trajectory", &gold, py::arg("task"));
  m.def("build_tree", &tree, py::arg("task"), py::arg("policy") = "", py::arg("config") = "{}");
  m.def("mc_values", &values, py::arg("tree"));
  m.def("drop_moment", &drop, py::arg("scores"), py::arg("rho"));
  m.def("masked_bce", [](const std::vector<double>& s, const std::vector<int>& y,
                         const std::vector<int>& mask) { return masked_bce(s, y, mask); });
  m.def("auc", [](const std::vector<double>& s, const std::vector<int>& y) { return auc(s, y); });
  m.def("compute_iou", [](std::array<int, 4> a, std::array<int, 4> b) {
    return compute_iou({a[0], a[1], a[2], a[3]}, {b[0], b[1], b[2], b[3]});
  });
  m.def("default_config", [] { return dump(config_to_json(RunConfig{})); });
  m.def("run_pipeline", &pipeline, py::arg("config"), py::arg("out_dir"), py::arg("resume") = false,
        py::arg("jobs") = 1, py::call_guard<py::gil_scoped_release>());
  m.def("verify_run", [](const std::string& dir) { return verify_run(dir); });
}
