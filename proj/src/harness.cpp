#include "tsearch/harness.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

namespace tsearch {

using nlohmann::json;
using nlohmann::ordered_json;

// ----------------------------------------------------------------------------
// Manifest
// ----------------------------------------------------------------------------

namespace {

Rational fps_from_json(const json& f) { return Rational::parse(f.is_string() ? f.get<std::string>() : f.dump()); }

DurationGroup group_for_duration(double seconds) {
  if (seconds < 180.0) return DurationGroup::short_;
  if (seconds <= 900.0) return DurationGroup::medium;
  return DurationGroup::long_;
}

std::optional<char> label_from_json(const json& v) {
  if (v.is_null()) return std::nullopt;
  const auto s = v.get<std::string>();
  if (s.size() != 1) throw ConfigError("option label must be one letter, got '" + s + "'");
  return s[0];
}

json label_json(std::optional<char> c) { return c ? json(std::string(1, *c)) : json(nullptr); }

}  // namespace

ManifestRecord record_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("record is not a JSON object");
  ManifestRecord r;
  try {
    if (j.contains("world")) r.world = world_from_json(j["world"]);
    const SyntheticWorld* w = r.world ? &*r.world : nullptr;

    if (j.contains("video_id")) {
      r.video_id = j["video_id"].get<std::string>();
    } else if (w) {
      r.video_id = w->video_id;
    } else {
      throw ConfigError("missing video_id");
    }
    if (j.contains("frames_root")) r.frames_root = j["frames_root"].get<std::string>();

    if (j.contains("total_frames")) {
      r.total_frames = j["total_frames"].get<FrameIndex>();
    } else if (w) {
      r.total_frames = w->total_frames;
    } else {
      throw ConfigError("missing total_frames");
    }
    r.fps = j.contains("fps") ? fps_from_json(j["fps"]) : (w ? w->fps : Rational{1, 1});

    if (j.contains("question")) {
      r.question = j["question"].get<std::string>();
    } else if (w) {
      r.question = w->question;
    } else {
      throw ConfigError("missing question");
    }

    if (j.contains("options")) {
      char next = 'A';
      for (const auto& o : j["options"]) {
        if (o.is_string()) {
          r.options.push_back({next, o.get<std::string>()});
        } else {
          r.options.push_back({*label_from_json(o.at("label")), o.at("text").get<std::string>()});
        }
        ++next;
      }
    } else if (w) {
      r.options = w->options;
    }

    if (j.contains("answer")) {
      r.answer = *label_from_json(j["answer"]);
    } else if (w) {
      r.answer = w->correct_choice;
    } else {
      throw ConfigError("missing answer");
    }

    if (j.contains("duration_group")) {
      r.duration_group = parse_duration_group(j["duration_group"].get<std::string>());
    } else {
      r.duration_group = group_for_duration(r.video().duration_seconds());
    }
  } catch (const json::exception& e) {
    throw ConfigError(e.what());
  } catch (const DomainError& e) {
    throw ConfigError(e.what());
  }

  try {
    r.video().validate();
    r.query().validate();
  } catch (const DomainError& e) {
    throw ConfigError(e.what());
  }
  if (!r.query().has_option(r.answer)) {
    throw ConfigError(fmt::format("answer '{}' is not one of the options", r.answer));
  }
  if (r.world && (r.world->total_frames != r.total_frames || !(r.world->fps == r.fps))) {
    throw ConfigError("record and synthetic world disagree on total_frames or fps");
  }
  return r;
}

json record_to_json(const ManifestRecord& r) {
  json options = json::array();
  for (const auto& o : r.options) options.push_back({{"label", std::string(1, o.label)}, {"text", o.text}});
  json j = {{"video_id", r.video_id},
            {"total_frames", r.total_frames},
            {"fps", r.fps.to_string()},
            {"question", r.question},
            {"options", options},
            {"answer", std::string(1, r.answer)},
            {"duration_group", to_string(r.duration_group)}};
  if (r.frames_root) j["frames_root"] = *r.frames_root;
  if (r.world) j["world"] = world_to_json(*r.world);
  return j;
}

std::vector<ManifestRecord> parse_manifest(std::istream& in) {
  std::vector<ManifestRecord> out;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(record_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw ConfigError(fmt::format("manifest line {}: {}", number, e.what()));
    } catch (const ConfigError& e) {
      throw ConfigError(fmt::format("manifest line {}: {}", number, e.what()));
    }
  }
  if (out.empty()) throw ConfigError("no records");
  return out;
}

std::vector<ManifestRecord> load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open manifest " + path.string());
  return parse_manifest(in);
}

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestRecord>& records) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  for (const auto& r : records) out << record_to_json(r).dump() << '\n';
}

std::vector<ManifestRecord> manifest_from_corpus(const std::vector<CorpusItem>& corpus) {
  std::vector<ManifestRecord> out;
  out.reserve(corpus.size());
  for (const auto& item : corpus) {
    const auto& w = item.world;
    ManifestRecord r;
    r.video_id = w.video_id;
    r.world = w;
    r.total_frames = w.total_frames;
    r.fps = w.fps;
    r.question = w.question;
    r.options = w.options;
    r.answer = w.correct_choice;
    r.duration_group = item.group;
    out.push_back(std::move(r));
  }
  return out;
}

const char* to_string(BackendKind kind) {
  switch (kind) {
    case BackendKind::http: return "http";
    case BackendKind::oracle: return "oracle";
    case BackendKind::stub: return "stub";
  }
  return "?";
}

BackendKind parse_backend_kind(const std::string& name) {
  if (name == "http") return BackendKind::http;
  if (name == "oracle") return BackendKind::oracle;
  if (name == "stub") return BackendKind::stub;
  throw ConfigError("unknown backend '" + name + "' (expected http, oracle or stub)");
}

// ----------------------------------------------------------------------------
// Confidence summaries
// ----------------------------------------------------------------------------

std::vector<double> default_thresholds() {
  std::vector<double> out;
  for (int i = 0; i <= 20; ++i) out.push_back(i * 0.05);
  return out;
}

void check_thresholds(const std::vector<double>& thresholds) {
  if (thresholds.empty()) throw ConfigError("no thresholds given");
  for (double t : thresholds) {
    if (!(t >= 0.0 && t <= 1.0)) throw ConfigError(fmt::format("threshold {} outside [0, 1]", t));
  }
}

ConfidenceSummary summarize_confidence(const std::vector<ScoredPrediction>& predictions,
                                       const std::vector<double>& thresholds) {
  check_thresholds(thresholds);
  ConfidenceSummary s;
  double sum_correct = 0.0;
  double sum_incorrect = 0.0;
  for (const auto& p : predictions) {
    if (p.correct) {
      ++s.correct;
      sum_correct += p.confidence;
    } else {
      ++s.incorrect;
      sum_incorrect += p.confidence;
    }
  }
  if (s.correct) s.mean_correct = sum_correct / s.correct;
  if (s.incorrect) s.mean_incorrect = sum_incorrect / s.incorrect;
  for (double t : thresholds) {
    ThresholdPoint point{t, 0, std::nullopt};
    int hits = 0;
    for (const auto& p : predictions) {
      if (p.confidence >= t) {
        ++point.support;
        hits += p.correct ? 1 : 0;
      }
    }
    if (point.support) point.accuracy = static_cast<double>(hits) / point.support;
    s.curve.push_back(point);
  }
  return s;
}

namespace {

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

ordered_json summary_to_json(const ConfidenceSummary& s) {
  ordered_json curve = ordered_json::array();
  for (const auto& p : s.curve) {
    curve.push_back({{"threshold", p.threshold}, {"support", p.support}, {"accuracy", optional_json(p.accuracy)}});
  }
  return {{"correct", s.correct},
          {"incorrect", s.incorrect},
          {"mean_conf_correct", optional_json(s.mean_correct)},
          {"mean_conf_incorrect", optional_json(s.mean_incorrect)},
          {"curve", curve}};
}

}  // namespace

// ----------------------------------------------------------------------------
// Reports
// ----------------------------------------------------------------------------

RunReport aggregate_report(const std::string& strategy, std::vector<RecordOutcome> records) {
  std::sort(records.begin(), records.end(), [](const auto& a, const auto& b) { return a.index < b.index; });
  RunReport r;
  r.strategy = strategy;
  std::vector<ScoredPrediction> scored;
  double calls = 0.0;
  for (const auto& o : records) {
    if (o.abort_error) {
      ++r.aborted;
      continue;
    }
    ++r.completed;
    r.correct += o.correct ? 1 : 0;
    calls += o.calls_used;
    auto& g = r.per_group[to_string(o.group)];
    ++g.total;
    g.correct += o.correct ? 1 : 0;
    scored.push_back({o.confidence, o.correct});
  }
  r.incomplete = r.aborted > 0;
  if (r.completed) {
    r.accuracy = static_cast<double>(r.correct) / r.completed;
    r.mean_calls = calls / r.completed;
  }
  r.confidence = summarize_confidence(scored, default_thresholds());
  r.records = std::move(records);
  return r;
}

namespace {

ordered_json outcome_fields(const RecordOutcome& o) {
  ordered_json j;
  j["index"] = o.index;
  j["video_id"] = o.video_id;
  j["group"] = to_string(o.group);
  j["answer"] = label_json(o.answer);
  j["truth"] = label_json(o.truth);
  j["correct"] = o.correct;
  j["confidence"] = o.confidence;
  j["value"] = o.value;
  j["calls_used"] = o.calls_used;
  j["wall_seconds"] = o.wall_seconds;
  j["stop_reason"] = o.stop_reason;
  j["had_error"] = o.had_error;
  j["abort_error"] = o.abort_error ? json(*o.abort_error) : json(nullptr);
  return j;
}

}  // namespace

ordered_json report_to_json(const RunReport& r) {
  ordered_json groups = ordered_json::object();
  for (const auto& [name, g] : r.per_group) {
    groups[name] = {{"total", g.total}, {"correct", g.correct}, {"accuracy", g.accuracy()}};
  }
  ordered_json rows = ordered_json::array();
  for (const auto& o : r.records) rows.push_back(outcome_fields(o));
  ordered_json j;
  j["strategy"] = r.strategy;
  j["incomplete"] = r.incomplete;
  j["records"] = r.records.size();
  j["completed"] = r.completed;
  j["aborted"] = r.aborted;
  j["correct"] = r.correct;
  j["accuracy"] = r.accuracy;
  j["mean_calls"] = r.mean_calls;
  j["per_group"] = groups;
  j["confidence"] = summary_to_json(r.confidence);
  j["per_record"] = rows;
  return j;
}

std::string report_to_csv(const RunReport& r) {
  std::string out =
      "index,video_id,group,answer,truth,correct,confidence,value,calls_used,wall_seconds,stop_reason,aborted\n";
  for (const auto& o : r.records) {
    out += fmt::format("{},{},{},{},{},{},{:.6f},{:.6f},{},{:.3f},{},{}\n", o.index, o.video_id, to_string(o.group),
                       o.answer ? std::string(1, *o.answer) : "", o.truth ? std::string(1, *o.truth) : "",
                       o.correct ? 1 : 0, o.confidence, o.value, o.calls_used, o.wall_seconds, o.stop_reason,
                       o.abort_error ? 1 : 0);
  }
  return out;
}

ordered_json outcome_to_json(const RecordOutcome& o, const std::string& strategy) {
  auto j = outcome_fields(o);
  j["strategy"] = strategy;
  j["trace"] = o.trace;
  return j;
}

RecordOutcome outcome_from_json(const ordered_json& j) {
  RecordOutcome o;
  try {
    o.index = j.at("index").get<std::size_t>();
    o.video_id = j.at("video_id").get<std::string>();
    o.group = parse_duration_group(j.at("group").get<std::string>());
    o.answer = label_from_json(json(j.at("answer")));
    o.truth = label_from_json(json(j.at("truth")));
    o.correct = j.at("correct").get<bool>();
    o.confidence = j.at("confidence").get<double>();
    o.value = j.at("value").get<double>();
    o.calls_used = j.at("calls_used").get<int>();
    o.wall_seconds = j.at("wall_seconds").get<double>();
    o.stop_reason = j.at("stop_reason").get<std::string>();
    o.had_error = j.value("had_error", false);
    if (!j.at("abort_error").is_null()) o.abort_error = j["abort_error"].get<std::string>();
    if (j.contains("trace")) o.trace = j["trace"];
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad trace record: ") + e.what());
  }
  return o;
}

// ----------------------------------------------------------------------------
// Running
// ----------------------------------------------------------------------------

namespace {

// Backend construction shared by every record of one run.
class BackendFactory {
 public:
  explicit BackendFactory(const RunOptions& options) : options_(options) {
    if (options.backend == BackendKind::http) {
      prompts_ = options.prompt_dir ? PromptSet::load(*options.prompt_dir) : PromptSet::defaults();
    }
  }

  std::unique_ptr<Backend> make(const ManifestRecord& record) {
    switch (options_.backend) {
      case BackendKind::oracle:
        if (!record.world) throw ConfigError("record " + record.video_id + " has no synthetic world for the oracle");
        return std::make_unique<OracleBackend>(*record.world);
      case BackendKind::stub:
        return ScriptedBackend::from_json(options_.stub_script);
      case BackendKind::http:
        return std::make_unique<HttpBackend>(options_.http, store_for(record), *prompts_);
    }
    throw ConfigError("unknown backend");
  }

 private:
  std::shared_ptr<FrameStore> store_for(const ManifestRecord& record) {
    std::string key;
    FrameStore::Kind kind;
    if (record.frames_root) {
      key = "dir:" + *record.frames_root;
      kind = FrameStore::Kind::directory;
    } else if (options_.frame_command) {
      key = "cmd:" + *options_.frame_command;
      kind = FrameStore::Kind::external_command;
    } else {
      key = "synthetic";
      kind = FrameStore::Kind::synthetic;
    }
    std::lock_guard lock(mu_);
    auto& slot = stores_[key];
    if (!slot) {
      const std::string root = kind == FrameStore::Kind::directory          ? *record.frames_root
                               : kind == FrameStore::Kind::external_command ? *options_.frame_command
                                                                            : std::string();
      slot = std::make_shared<FrameStore>(kind, root, options_.frame_cache_bytes);
    }
    return slot;
  }

  const RunOptions& options_;
  std::optional<PromptSet> prompts_;
  std::mutex mu_;
  std::map<std::string, std::shared_ptr<FrameStore>> stores_;
};

RecordOutcome run_with(const ManifestRecord& record, std::size_t index, const RunOptions& options,
                       BackendFactory& factory) {
  RecordOutcome o;
  o.index = index;
  o.video_id = record.video_id;
  o.group = record.duration_group;
  o.truth = record.answer;
  const auto started = std::chrono::steady_clock::now();
  try {
    auto backend = factory.make(record);
    auto result = run_strategy(options.strategy, record.video(), record.query(), *backend, options.config);
    o.answer = result.answer.parsed_choice;
    o.correct = o.answer && o.answer == o.truth;
    o.confidence = result.answer.confidence;
    o.value = result.value;
    o.calls_used = result.calls_used;
    o.stop_reason = to_string(result.stop_reason);
    o.had_error = result.had_error;
    o.trace = result.trace.to_json();
  } catch (const std::exception& e) {
    o.abort_error = e.what();
    o.stop_reason = "aborted";
    spdlog::error("record {} ({}) aborted: {}", index, record.video_id, e.what());
  }
  o.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return o;
}

}  // namespace

RecordOutcome run_record(const ManifestRecord& record, std::size_t index, const RunOptions& options) {
  BackendFactory factory(options);
  return run_with(record, index, options, factory);
}

RunReport run_manifest(const std::vector<ManifestRecord>& records, const RunOptions& options) {
  if (records.empty()) throw ConfigError("no records");
  options.config.validate();
  if (options.workers < 1) throw ConfigError("workers must be >= 1");
  BackendFactory factory(options);
  std::vector<RecordOutcome> outcomes(records.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < records.size(); i = next++) outcomes[i] = run_with(records[i], i, options, factory);
  };
  const auto threads = std::min<std::size_t>(static_cast<std::size_t>(options.workers), records.size());
  if (threads <= 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(work);
  }
  return aggregate_report(to_string(options.strategy), std::move(outcomes));
}

void write_run(const RunReport& report, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  {
    std::ofstream out(out_dir / "traces.jsonl");
    for (const auto& o : report.records) out << outcome_to_json(o, report.strategy).dump() << '\n';
  }
  {
    std::ofstream out(out_dir / "report.json");
    out << report_to_json(report).dump(2) << '\n';
  }
  {
    std::ofstream out(out_dir / "report.csv");
    out << report_to_csv(report);
  }
}

RunReport report_from_traces(const std::filesystem::path& traces_path) {
  std::ifstream in(traces_path);
  if (!in) throw ConfigError("cannot open " + traces_path.string());
  std::vector<RecordOutcome> outcomes;
  std::string strategy;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = ordered_json::parse(line);
      const auto s = j.at("strategy").get<std::string>();
      if (strategy.empty()) strategy = s;
      if (s != strategy) throw ConfigError("mixed strategies in one trace file");
      outcomes.push_back(outcome_from_json(j));
    } catch (const std::exception& e) {
      throw ConfigError(fmt::format("{} line {}: {}", traces_path.string(), number, e.what()));
    }
  }
  if (outcomes.empty()) throw ConfigError("no records");
  return aggregate_report(strategy, std::move(outcomes));
}

// ----------------------------------------------------------------------------
// Analyses
// ----------------------------------------------------------------------------

ConfidenceAnalysis analyze_confidence(const std::vector<RunReport>& reports, const std::vector<double>& thresholds) {
  check_thresholds(thresholds);
  if (reports.empty()) throw ConfigError("no reports to analyze");
  const bool have_us = std::any_of(reports.begin(), reports.end(), [](const auto& r) { return r.strategy == "us"; });

  ConfidenceAnalysis a;
  std::vector<ScoredPrediction> video;
  std::vector<ScoredPrediction> interval;
  bool have_utv = false;
  for (const auto& r : reports) {
    if (!have_us || r.strategy == "us") {
      a.video_sources.push_back(r.strategy);
      for (const auto& o : r.records) {
        if (!o.abort_error) video.push_back({o.confidence, o.correct});
      }
    }
    if (r.strategy != "utv") continue;
    have_utv = true;
    for (const auto& o : r.records) {
      if (o.abort_error || o.trace.is_null()) continue;
      for (const auto& ev : o.trace.at("events")) {
        if (ev.at("event") != "verdict") continue;
        const auto choice = label_from_json(ev.at("choice"));
        interval.push_back({ev.at("conf").get<double>(), choice && choice == o.truth});
      }
    }
  }
  a.video_level = summarize_confidence(video, thresholds);
  if (have_utv) a.interval_level = summarize_confidence(interval, thresholds);
  return a;
}

ordered_json analysis_to_json(const ConfidenceAnalysis& a) {
  ordered_json j;
  j["video_sources"] = a.video_sources;
  j["video_level"] = summary_to_json(a.video_level);
  j["interval_level"] = a.interval_level ? summary_to_json(*a.interval_level) : ordered_json(nullptr);
  return j;
}

std::string curve_to_jsonl(const ConfidenceAnalysis& a) {
  std::string out;
  auto emit = [&](const char* level, const ConfidenceSummary& s) {
    for (const auto& p : s.curve) {
      ordered_json row = {{"level", level},
                          {"threshold", p.threshold},
                          {"support", p.support},
                          {"accuracy", optional_json(p.accuracy)}};
      out += row.dump() + "\n";
    }
  };
  emit("video", a.video_level);
  if (a.interval_level) emit("interval", *a.interval_level);
  return out;
}

std::vector<ScalingPoint> run_scaling(const std::vector<ManifestRecord>& records, const RunOptions& options,
                                      const std::vector<int>& grid) {
  if (grid.empty()) throw ConfigError("scaling grid is empty");
  std::vector<ScalingPoint> out;
  for (int setting : grid) {
    if (setting < 1) throw ConfigError("scaling grid values must be >= 1");
    RunOptions run = options;
    ScalingPoint p;
    p.strategy = to_string(options.strategy);
    p.setting = setting;
    switch (options.strategy) {
      case Strategy::ts:
      case Strategy::ts_bfs:
        run.config.k = setting;
        p.parameter = "k";
        break;
      case Strategy::utv:
        run.config.utv_intervals = setting;
        p.parameter = "num_intervals";
        break;
      case Strategy::us:
        run.config.n_f = setting;
        p.parameter = "n_f";
        break;
    }
    const auto report = run_manifest(records, run);
    p.passes = report.mean_calls;
    p.accuracy = report.accuracy;
    p.completed = report.completed;
    out.push_back(p);
  }
  return out;
}

ordered_json scaling_point_to_json(const ScalingPoint& p) {
  return {{"strategy", p.strategy}, {"parameter", p.parameter}, {"setting", p.setting},
          {"passes", p.passes},     {"accuracy", p.accuracy},   {"completed", p.completed}};
}

}  // namespace tsearch
