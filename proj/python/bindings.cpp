// Python extension. Structured values cross the boundary as JSON text and are
// decoded by the package wrapper.

#include "tsearch/config.hpp"
#include "tsearch/harness.hpp"
#include "tsearch/oracle.hpp"
#include "tsearch/sampling.hpp"
#include "tsearch/search.hpp"

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace py = pybind11;
using namespace tsearch;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

using Pair = std::pair<FrameIndex, FrameIndex>;

Interval to_interval(const Pair& p) { return {p.first, p.second}; }

SearchConfig parse_config(const std::string& config_json) {
  return config_json.empty() ? SearchConfig{} : config_from_json(json::parse(config_json));
}

std::string search_json(const std::string& world_json, const std::string& strategy, const std::string& config_json) {
  const auto world = world_from_json(json::parse(world_json));
  OracleBackend backend(world);
  const auto result = run_strategy(parse_strategy(strategy), world.video(), world.query(), backend,
                                   parse_config(config_json));
  ordered_json j;
  j["answer"] = result.answer.parsed_choice ? json(std::string(1, *result.answer.parsed_choice)) : json(nullptr);
  j["answer_text"] = result.answer.answer_text;
  j["confidence"] = result.answer.confidence;
  j["value"] = result.value;
  j["interval"] = {result.chosen_interval.start, result.chosen_interval.end};
  j["stop_reason"] = to_string(result.stop_reason);
  j["calls_used"] = result.calls_used;
  j["had_error"] = result.had_error;
  j["trace"] = result.trace.to_json();
  j["trace_text"] = result.trace.to_text();
  return j.dump();
}

std::string corpus_json(const std::string& spec_json) {
  const auto spec = spec_json.empty() ? CorpusSpec::canonical() : corpus_spec_from_json(json::parse(spec_json));
  json out = json::array();
  for (const auto& r : manifest_from_corpus(generate_corpus(spec))) out.push_back(record_to_json(r));
  return out.dump();
}

std::string run_manifest_json(const std::string& records_json, const std::string& strategy,
                              const std::string& config_json, int workers, const std::optional<std::string>& out_dir) {
  std::vector<ManifestRecord> records;
  for (const auto& r : json::parse(records_json)) records.push_back(record_from_json(r));
  RunOptions options;
  options.strategy = parse_strategy(strategy);
  options.backend = BackendKind::oracle;
  options.config = parse_config(config_json);
  options.workers = workers;
  RunReport report;
  {
    py::gil_scoped_release release;
    report = run_manifest(records, options);
  }
  if (out_dir) write_run(report, *out_dir);
  return report_to_json(report).dump();
}

}  // namespace

PYBIND11_MODULE(_tsearch, m) {
  m.doc() = "Training-free temporal search for long-video question answering";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
  py::register_exception<BackendError>(m, "BackendError", PyExc_RuntimeError);

  m.def("compute_confidence", [](const std::vector<double>& lps) { return compute_confidence(lps); },
        py::arg("token_logprobs"));
  m.def("node_value", &node_value, py::arg("confidence"), py::arg("self_eval"), py::arg("w_conf") = 1.0,
        py::arg("w_eval") = 1.0);
  m.def("uniform_sample", [](const Pair& iv, int n_f) { return uniform_sample(to_interval(iv), n_f).indices; },
        py::arg("interval"), py::arg("n_f"));
  m.def(
      "uniform_split",
      [](const Pair& iv, int n) {
        std::vector<Pair> out;
        for (const auto& p : uniform_split(to_interval(iv), n)) out.emplace_back(p.start, p.end);
        return out;
      },
      py::arg("interval"), py::arg("n"));
  m.def("interval_iou", [](const Pair& a, const Pair& b) { return interval_iou(to_interval(a), to_interval(b)); },
        py::arg("a"), py::arg("b"));
  m.def("_config", [](const std::string& c) { return config_to_json(parse_config(c)).dump(); });
  m.def("_corpus", &corpus_json);
  m.def("_search", &search_json);
  m.def("_run_manifest", &run_manifest_json);
  m.def("_report_from_traces", [](const std::string& path) { return report_to_json(report_from_traces(path)).dump(); });
}
