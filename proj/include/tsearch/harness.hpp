#pragma once

// Benchmark harness: JSONL manifests, running a strategy over every record,
// persisted traces, run reports and the confidence and scaling analyses.

#include "tsearch/domain.hpp"
#include "tsearch/http_backend.hpp"
#include "tsearch/oracle.hpp"
#include "tsearch/search.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace tsearch {

struct ManifestRecord {
  std::string video_id;
  std::optional<std::string> frames_root;
  std::optional<SyntheticWorld> world;
  FrameIndex total_frames = 0;
  Rational fps{1, 1};
  std::string question;
  std::vector<QueryOption> options;
  char answer = 'A';
  DurationGroup duration_group = DurationGroup::long_;

  VideoSource video() const { return {video_id, total_frames, fps}; }
  Query query() const { return {question, options, answer}; }
};

/// Fields missing from a record that embeds a synthetic world are taken from
/// the world. Throws ConfigError naming the problem.
ManifestRecord record_from_json(const nlohmann::json& j);
nlohmann::json record_to_json(const ManifestRecord& record);

/// One JSON object per non-blank line. Errors carry the 1-based line
/// number; a manifest without records fails with "no records".
std::vector<ManifestRecord> parse_manifest(std::istream& in);
std::vector<ManifestRecord> load_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const std::vector<ManifestRecord>& records);
std::vector<ManifestRecord> manifest_from_corpus(const std::vector<CorpusItem>& corpus);

enum class BackendKind { http, oracle, stub };
const char* to_string(BackendKind kind);
BackendKind parse_backend_kind(const std::string& name);

struct RunOptions {
  Strategy strategy = Strategy::ts_bfs;
  BackendKind backend = BackendKind::oracle;
  SearchConfig config;
  HttpBackendConfig http;
  std::optional<std::filesystem::path> prompt_dir;
  nlohmann::json stub_script;                     // used with BackendKind::stub
  std::optional<std::string> frame_command;       // external decoder template for records without frames_root
  std::size_t frame_cache_bytes = 64u << 20;
  int workers = 1;
};

struct RecordOutcome {
  std::size_t index = 0;  // position in the manifest
  std::string video_id;
  DurationGroup group = DurationGroup::long_;
  std::optional<char> answer;
  std::optional<char> truth;
  bool correct = false;
  double confidence = 0.0;
  double value = 0.0;
  int calls_used = 0;
  double wall_seconds = 0.0;
  std::string stop_reason;
  bool had_error = false;
  std::optional<std::string> abort_error;  // set when the record produced no answer
  nlohmann::ordered_json trace;            // SearchTrace::to_json(), null when aborted
};

struct ThresholdPoint {
  double threshold = 0.0;
  int support = 0;
  std::optional<double> accuracy;  // absent when support is 0
};

/// Mean confidence of correct and incorrect predictions and the accuracy of
/// predictions with confidence >= each threshold.
struct ConfidenceSummary {
  int correct = 0;
  int incorrect = 0;
  std::optional<double> mean_correct;
  std::optional<double> mean_incorrect;
  std::vector<ThresholdPoint> curve;
};

/// 0.00, 0.05, ..., 1.00.
std::vector<double> default_thresholds();
/// Rejects thresholds outside [0, 1] with ConfigError.
void check_thresholds(const std::vector<double>& thresholds);

struct ScoredPrediction {
  double confidence = 0.0;
  bool correct = false;
};
ConfidenceSummary summarize_confidence(const std::vector<ScoredPrediction>& predictions,
                                       const std::vector<double>& thresholds);

struct GroupAccuracy {
  int total = 0;
  int correct = 0;
  double accuracy() const { return total ? static_cast<double>(correct) / total : 0.0; }
};

struct RunReport {
  std::string strategy;
  std::vector<RecordOutcome> records;  // manifest order
  bool incomplete = false;             // some record aborted
  int completed = 0;
  int correct = 0;
  int aborted = 0;
  double accuracy = 0.0;  // correct / completed
  double mean_calls = 0.0;
  std::map<std::string, GroupAccuracy> per_group;
  ConfidenceSummary confidence;
};

RunReport aggregate_report(const std::string& strategy, std::vector<RecordOutcome> records);

/// Report JSON with aggregates and per-record rows (traces excluded).
nlohmann::ordered_json report_to_json(const RunReport& report);
std::string report_to_csv(const RunReport& report);

/// One line per record: the outcome fields plus its trace.
nlohmann::ordered_json outcome_to_json(const RecordOutcome& outcome, const std::string& strategy);
RecordOutcome outcome_from_json(const nlohmann::ordered_json& j);

/// Runs one record; backend failures that prevent any answer are captured
/// in abort_error rather than thrown.
RecordOutcome run_record(const ManifestRecord& record, std::size_t index, const RunOptions& options);

/// Runs every record on a pool of options.workers threads.
RunReport run_manifest(const std::vector<ManifestRecord>& records, const RunOptions& options);

/// Writes traces.jsonl, report.json and report.csv under out_dir.
void write_run(const RunReport& report, const std::filesystem::path& out_dir);

/// Rebuilds a report from a traces.jsonl file.
RunReport report_from_traces(const std::filesystem::path& traces_path);

struct ConfidenceAnalysis {
  std::vector<std::string> video_sources;     // strategies feeding the video level
  ConfidenceSummary video_level;              // final answers (US runs when present)
  std::optional<ConfidenceSummary> interval_level;  // per-interval UTV verdicts
};

ConfidenceAnalysis analyze_confidence(const std::vector<RunReport>& reports, const std::vector<double>& thresholds);
nlohmann::ordered_json analysis_to_json(const ConfidenceAnalysis& analysis);
/// JSONL rows {level, threshold, support, accuracy}.
std::string curve_to_jsonl(const ConfidenceAnalysis& analysis);

struct ScalingPoint {
  std::string strategy;
  std::string parameter;  // "k", "num_intervals" or "n_f"
  int setting = 0;
  double passes = 0.0;  // mean calls_used
  double accuracy = 0.0;
  int completed = 0;
};

/// Varies k for ts and ts-bfs, the interval count for utv and n_f for us.
std::vector<ScalingPoint> run_scaling(const std::vector<ManifestRecord>& records, const RunOptions& options,
                                      const std::vector<int>& grid);
nlohmann::ordered_json scaling_point_to_json(const ScalingPoint& point);

}  // namespace tsearch
