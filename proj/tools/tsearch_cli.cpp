// Command-line front end: run a strategy over a manifest, analyze
// confidence, sweep inference budgets and generate synthetic corpora.

#include "tsearch/config.hpp"
#include "tsearch/harness.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <fstream>
#include <iostream>

using namespace tsearch;
namespace fs = std::filesystem;

namespace {

struct CommonFlags {
  std::string manifest;
  std::string strategy = "ts-bfs";
  std::string backend = "oracle";
  std::string base_url;
  std::string model;
  std::string api_key_env;
  std::string config_path;
  std::string prompt_dir;
  std::string stub_script;
  std::string frame_command;
  std::optional<std::uint64_t> seed;
  std::optional<int> parallel_width;
  int workers = 1;
  int timeout_s = 120;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("-m,--manifest", f.manifest, "Manifest JSONL file")->required()->check(CLI::ExistingFile);
  cmd->add_option("-s,--strategy", f.strategy, "us, utv, ts or ts-bfs")->capture_default_str();
  cmd->add_option("-b,--backend", f.backend, "http, oracle or stub")->capture_default_str();
  cmd->add_option("--base-url", f.base_url, "Chat-completions base URL (http backend)");
  cmd->add_option("--model", f.model, "Model name sent to the server");
  cmd->add_option("--api-key-env", f.api_key_env, "Environment variable holding the API key");
  cmd->add_option("--timeout", f.timeout_s, "Per-request timeout in seconds")->capture_default_str();
  cmd->add_option("-c,--config", f.config_path, "Search config JSON (SearchConfig field names)")
      ->check(CLI::ExistingFile);
  cmd->add_option("--prompt-dir", f.prompt_dir, "Directory with answer/expand/evaluate/keyinfo.txt")
      ->check(CLI::ExistingDirectory);
  cmd->add_option("--stub-script", f.stub_script, "Script JSON for the stub backend")->check(CLI::ExistingFile);
  cmd->add_option("--frame-command", f.frame_command,
                  "Decoder command template with {video} and {index}, for records without frames_root");
  cmd->add_option("--seed", f.seed, "Search seed (overrides the config file)");
  cmd->add_option("--parallel-width", f.parallel_width, "Concurrent sibling evaluations (overrides config)");
  cmd->add_option("-j,--workers", f.workers, "Records run concurrently")->capture_default_str();
}

RunOptions make_options(const CommonFlags& f) {
  RunOptions o;
  o.strategy = parse_strategy(f.strategy);
  o.backend = parse_backend_kind(f.backend);
  if (!f.config_path.empty()) o.config = load_config(f.config_path);
  if (f.seed) o.config.seed = *f.seed;
  if (f.parallel_width) o.config.parallel_width = *f.parallel_width;
  o.config.validate();
  if (!f.base_url.empty()) o.http.base_url = f.base_url;
  if (!f.model.empty()) o.http.model = f.model;
  if (!f.api_key_env.empty()) o.http.api_key_env = f.api_key_env;
  o.http.timeout = std::chrono::seconds(f.timeout_s);
  if (!f.prompt_dir.empty()) o.prompt_dir = f.prompt_dir;
  if (!f.frame_command.empty()) o.frame_command = f.frame_command;
  if (o.backend == BackendKind::stub) {
    if (f.stub_script.empty()) throw ConfigError("the stub backend needs --stub-script");
    std::ifstream in(f.stub_script);
    o.stub_script = nlohmann::json::parse(in);
  }
  o.workers = f.workers;
  return o;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << text;
}

std::vector<int> parse_grid(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stoi(item));
    } catch (const std::exception&) {
      throw ConfigError("bad grid entry '" + item + "'");
    }
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Confidence-guided temporal search for long-video question answering"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "Debug logging");

  // run
  CommonFlags run_flags;
  std::string run_out = "out";
  auto* run = app.add_subcommand("run", "Run a strategy over every manifest record");
  add_common(run, run_flags);
  run->add_option("-o,--out", run_out, "Output directory")->capture_default_str();

  // analyze
  std::vector<std::string> analyze_inputs;
  std::string analyze_out = "analysis";
  std::string thresholds_text;
  auto* analyze = app.add_subcommand("analyze", "Confidence vs accuracy from one or more run directories");
  analyze->add_option("inputs", analyze_inputs, "Run directories or traces.jsonl files")->required();
  analyze->add_option("-o,--out", analyze_out, "Output directory")->capture_default_str();
  analyze->add_option("--thresholds", thresholds_text, "Comma-separated thresholds in [0,1] (default 0:0.05:1)");

  // scaling
  CommonFlags scale_flags;
  std::string grid_text = "1,5,10";
  std::string scale_out = "scaling.jsonl";
  auto* scaling = app.add_subcommand("scaling", "Accuracy against inference passes");
  add_common(scaling, scale_flags);
  scaling->add_option("-g,--grid", grid_text,
                      "Settings: k for ts/ts-bfs, interval count for utv, n_f for us")
      ->capture_default_str();
  scaling->add_option("-o,--out", scale_out, "Output JSONL file")->capture_default_str();

  // gen-corpus
  std::string corpus_spec_path;
  std::string corpus_out = "corpus.jsonl";
  std::optional<std::uint64_t> corpus_seed;
  auto* gen = app.add_subcommand("gen-corpus", "Write a synthetic oracle corpus as a manifest");
  gen->add_option("--spec", corpus_spec_path, "Corpus spec JSON (default: the canonical 200 long videos)")
      ->check(CLI::ExistingFile);
  gen->add_option("--seed", corpus_seed, "Override the spec seed");
  gen->add_option("-o,--out", corpus_out, "Manifest output path")->capture_default_str();

  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::warn);

  try {
    if (*run) {
      const auto options = make_options(run_flags);
      const auto records = load_manifest(run_flags.manifest);
      const auto report = run_manifest(records, options);
      write_run(report, run_out);
      fmt::print("{}: accuracy {:.4f} ({}/{}), mean calls {:.2f}{}\n", report.strategy, report.accuracy,
                 report.correct, report.completed, report.mean_calls,
                 report.incomplete ? fmt::format(", {} aborted (incomplete)", report.aborted) : "");
      return report.incomplete ? 2 : 0;
    }
    if (*analyze) {
      std::vector<RunReport> reports;
      for (const auto& input : analyze_inputs) {
        fs::path p = input;
        if (fs::is_directory(p)) p /= "traces.jsonl";
        reports.push_back(report_from_traces(p));
      }
      std::vector<double> thresholds = default_thresholds();
      if (!thresholds_text.empty()) {
        thresholds.clear();
        std::stringstream ss(thresholds_text);
        std::string item;
        while (std::getline(ss, item, ',')) thresholds.push_back(std::stod(item));
      }
      const auto analysis = analyze_confidence(reports, thresholds);
      write_text(fs::path(analyze_out) / "confidence.json", analysis_to_json(analysis).dump(2) + "\n");
      write_text(fs::path(analyze_out) / "curve.jsonl", curve_to_jsonl(analysis));
      const auto& v = analysis.video_level;
      fmt::print("video level: mean conf correct {} / incorrect {} ({} / {} predictions)\n",
                 v.mean_correct ? fmt::format("{:.4f}", *v.mean_correct) : "-",
                 v.mean_incorrect ? fmt::format("{:.4f}", *v.mean_incorrect) : "-", v.correct, v.incorrect);
      if (analysis.interval_level) {
        const auto& i = *analysis.interval_level;
        fmt::print("interval level: mean conf correct {} / incorrect {}\n",
                   i.mean_correct ? fmt::format("{:.4f}", *i.mean_correct) : "-",
                   i.mean_incorrect ? fmt::format("{:.4f}", *i.mean_incorrect) : "-");
      }
      return 0;
    }
    if (*scaling) {
      const auto options = make_options(scale_flags);
      const auto records = load_manifest(scale_flags.manifest);
      const auto points = run_scaling(records, options, parse_grid(grid_text));
      std::string text;
      for (const auto& p : points) {
        text += scaling_point_to_json(p).dump() + "\n";
        fmt::print("{} {}={}: passes {:.2f}, accuracy {:.4f}\n", p.strategy, p.parameter, p.setting, p.passes,
                   p.accuracy);
      }
      write_text(scale_out, text);
      return 0;
    }
    if (*gen) {
      CorpusSpec spec = CorpusSpec::canonical();
      if (!corpus_spec_path.empty()) {
        std::ifstream in(corpus_spec_path);
        spec = corpus_spec_from_json(nlohmann::json::parse(in));
      }
      if (corpus_seed) spec.seed = *corpus_seed;
      const auto records = manifest_from_corpus(generate_corpus(spec));
      write_manifest(corpus_out, records);
      fmt::print("wrote {} records to {}\n", records.size(), corpus_out);
      return 0;
    }
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 1;
  }
  return 0;
}
