#include "tsearch/harness.hpp"

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace tsearch;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::vector<ManifestRecord> parse(const std::string& text) {
  std::istringstream in(text);
  return parse_manifest(in);
}

std::string error_of(const std::string& text) {
  try {
    parse(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

std::vector<ManifestRecord> small_corpus(int count) {
  auto spec = CorpusSpec::canonical();
  spec.groups = {CorpusSpec::group_defaults(DurationGroup::long_, count)};
  return manifest_from_corpus(generate_corpus(spec));
}

// Report JSON without the timing columns.
json comparable(const RunReport& r) {
  json j = report_to_json(r);
  for (auto& row : j["per_record"]) row.erase("wall_seconds");
  return j;
}

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

int run_cli(const std::string& args) {
  const char* cli = std::getenv("TSEARCH_CLI");
  REQUIRE(cli != nullptr);
  const auto status = std::system((std::string("'") + cli + "' " + args + " >/dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("manifest records") {
  const auto records = parse(
      R"({"video_id": "a", "total_frames": 100, "fps": "30000/1001", "question": "q?", "options": ["red", "blue"], "answer": "B"})"
      "\n\n"
      R"({"video_id": "b", "total_frames": 600, "question": "q?", "options": [{"label": "A", "text": "x"}, {"label": "B", "text": "y"}], "answer": "A", "frames_root": "/data"})"
      "\n"
      R"({"video_id": "c", "total_frames": 4000, "question": "q?", "options": ["x", "y"], "answer": "A", "duration_group": "short"})");
  REQUIRE(records.size() == 3);
  CHECK(records[0].fps.num == 30000);
  CHECK(records[0].fps.den == 1001);
  CHECK(records[0].options[1].label == 'B');
  CHECK(records[0].options[1].text == "blue");
  CHECK(records[0].duration_group == DurationGroup::short_);
  CHECK(records[1].duration_group == DurationGroup::medium);
  CHECK(records[1].frames_root == "/data");
  CHECK(records[2].duration_group == DurationGroup::short_);
  CHECK(record_from_json(record_to_json(records[0])).question == "q?");
}

TEST_CASE("manifest errors name the line") {
  const std::string good = R"({"video_id": "a", "total_frames": 10, "question": "q", "options": ["x", "y"], "answer": "A"})";
  CHECK(error_of(good + "\n" + R"({"video_id": "b", "total_frames": 10, "question": "q", "options": ["x"]})")
            .rfind("manifest line 2:", 0) == 0);
  CHECK(error_of(good + "\nnot json").rfind("manifest line 2:", 0) == 0);
  CHECK(error_of(R"({"video_id": "a", "total_frames": 10, "question": "q", "options": ["x", "y"], "answer": "C"})")
            .rfind("manifest line 1:", 0) == 0);
  CHECK(error_of("\n  \n") == "no records");
}

TEST_CASE("corpus records round-trip with their worlds") {
  const auto records = small_corpus(3);
  const auto dir = fresh_dir("tsearch_manifest");
  write_manifest(dir / "m.jsonl", records);
  const auto back = load_manifest(dir / "m.jsonl");
  REQUIRE(back.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(record_to_json(back[i]) == record_to_json(records[i]));
    REQUIRE(back[i].world);
    CHECK(back[i].answer == back[i].world->correct_choice);
  }
  fs::remove_all(dir);
}

TEST_CASE("confidence summary and thresholds") {
  const auto s = summarize_confidence({{0.9, true}, {0.9, true}, {0.4, false}}, {0.0, 0.5, 1.0});
  CHECK(s.correct == 2);
  CHECK(s.incorrect == 1);
  CHECK(*s.mean_correct == doctest::Approx(0.9));
  CHECK(*s.mean_incorrect == doctest::Approx(0.4));
  REQUIRE(s.curve.size() == 3);
  CHECK(s.curve[0].support == 3);
  CHECK(*s.curve[0].accuracy == doctest::Approx(2.0 / 3.0));
  CHECK(s.curve[1].support == 2);
  CHECK(*s.curve[1].accuracy == doctest::Approx(1.0));
  CHECK(s.curve[2].support == 0);
  CHECK_FALSE(s.curve[2].accuracy);

  const auto t = default_thresholds();
  REQUIRE(t.size() == 21);
  CHECK(t.front() == 0.0);
  CHECK(t.back() == doctest::Approx(1.0));
  CHECK_NOTHROW(check_thresholds(t));
  CHECK_THROWS_AS(check_thresholds({0.5, 1.01}), ConfigError);
  CHECK_THROWS_AS(check_thresholds({-0.1}), ConfigError);

  const auto empty = summarize_confidence({}, {0.5});
  CHECK_FALSE(empty.mean_correct);
  CHECK_FALSE(empty.curve[0].accuracy);
}

TEST_CASE("oracle runs are deterministic across worker counts") {
  const auto records = small_corpus(12);
  RunOptions options;
  options.strategy = Strategy::ts_bfs;
  options.workers = 1;
  const auto serial = run_manifest(records, options);
  options.workers = 4;
  options.config.parallel_width = 3;
  const auto pooled = run_manifest(records, options);
  CHECK(comparable(serial) == comparable(pooled));
  CHECK(serial.completed == 12);
  CHECK_FALSE(serial.incomplete);
  for (std::size_t i = 0; i < records.size(); ++i) {
    CHECK(serial.records[i].trace == pooled.records[i].trace);
    CHECK(serial.records[i].index == i);
  }
  CHECK(serial.per_group.at("long").total == 12);
}

TEST_CASE("single-pass runs use one call per record") {
  RunOptions options;
  options.strategy = Strategy::us;
  const auto report = run_manifest(small_corpus(5), options);
  for (const auto& o : report.records) CHECK(o.calls_used == 1);
  CHECK(report.mean_calls == 1.0);
}

TEST_CASE("persisted traces rebuild the same report") {
  RunOptions options;
  options.strategy = Strategy::ts;
  const auto report = run_manifest(small_corpus(6), options);
  const auto dir = fresh_dir("tsearch_run");
  write_run(report, dir);
  CHECK(fs::exists(dir / "report.json"));
  CHECK(fs::exists(dir / "report.csv"));
  const auto rebuilt = report_from_traces(dir / "traces.jsonl");
  CHECK(report_to_json(rebuilt) == report_to_json(report));
  for (std::size_t i = 0; i < report.records.size(); ++i) {
    CHECK(SearchTrace::from_json(rebuilt.records[i].trace).to_text() ==
          SearchTrace::from_json(report.records[i].trace).to_text());
  }
  std::ifstream csv(dir / "report.csv");
  std::string header;
  std::getline(csv, header);
  CHECK(header.find("video_id") != std::string::npos);
  int rows = 0;
  for (std::string line; std::getline(csv, line);) ++rows;
  CHECK(rows == 6);
  fs::remove_all(dir);
}

TEST_CASE("stub runs and aborted records") {
  ManifestRecord r;
  r.video_id = "clip";
  r.total_frames = 64;
  r.question = "q";
  r.options = {{'A', "x"}, {'B', "y"}};
  r.answer = 'B';
  RunOptions options;
  options.backend = BackendKind::stub;
  options.strategy = Strategy::us;
  options.stub_script = json::parse(R"({"answers": [{"interval": [0, 64], "text": "B", "probs": [0.8]}]})");
  const auto ok = run_manifest({r}, options);
  CHECK(ok.correct == 1);
  CHECK(ok.accuracy == 1.0);

  options.stub_script = json::parse(R"({"answers": [{"interval": [0, 64], "error": "down"}]})");
  const auto failed = run_manifest({r, r}, options);
  CHECK(failed.incomplete);
  CHECK(failed.aborted == 2);
  CHECK(failed.completed == 0);
  CHECK(failed.records[0].abort_error == "down");

  options.backend = BackendKind::oracle;
  const auto no_world = run_manifest({r}, options);
  CHECK(no_world.aborted == 1);
}

TEST_CASE("confidence analysis prefers single-pass runs") {
  auto outcome = [](std::size_t i, double conf, bool correct) {
    RecordOutcome o;
    o.index = i;
    o.video_id = "v" + std::to_string(i);
    o.confidence = conf;
    o.correct = correct;
    o.answer = correct ? 'A' : 'B';
    o.truth = 'A';
    o.stop_reason = "budget_exhausted";
    return o;
  };
  const auto us = aggregate_report("us", {outcome(0, 0.9, true), outcome(1, 0.8, true), outcome(2, 1.0, true),
                                          outcome(3, 0.4, false), outcome(4, 0.4, false)});
  const auto ts = aggregate_report("ts", {outcome(0, 0.1, true)});
  const auto a = analyze_confidence({ts, us}, default_thresholds());
  CHECK(a.video_sources == std::vector<std::string>{"us"});
  CHECK(*a.video_level.mean_correct == doctest::Approx(0.9));
  CHECK(*a.video_level.mean_incorrect == doctest::Approx(0.4));
  CHECK_FALSE(a.interval_level);
  const auto only_ts = analyze_confidence({ts}, default_thresholds());
  CHECK(only_ts.video_sources == std::vector<std::string>{"ts"});
  const auto rows = curve_to_jsonl(a);
  CHECK(std::count(rows.begin(), rows.end(), '\n') == 21);
  CHECK(rows.find(R"("level":"video")") != std::string::npos);
}

TEST_CASE("interval-level analysis reads voting traces") {
  RunOptions options;
  options.strategy = Strategy::utv;
  const auto utv = run_manifest(small_corpus(10), options);
  const auto a = analyze_confidence({utv}, default_thresholds());
  REQUIRE(a.interval_level);
  CHECK(a.interval_level->correct + a.interval_level->incorrect == 10 * options.config.utv_intervals);
  CHECK(analysis_to_json(a).contains("interval_level"));
}

TEST_CASE("scaling points report calls and accuracy") {
  const auto records = small_corpus(4);
  RunOptions options;
  options.strategy = Strategy::ts_bfs;
  const auto points = run_scaling(records, options, {1, 3});
  REQUIRE(points.size() == 2);
  CHECK(points[0].parameter == "k");
  CHECK(points[0].setting == 1);
  CHECK(points[0].completed == 4);
  CHECK(points[0].passes >= 1.0);
  CHECK(points[1].passes >= points[0].passes);
  options.strategy = Strategy::us;
  const auto us = run_scaling(records, options, {8, 16});
  CHECK(us[0].parameter == "n_f");
  CHECK(us[0].passes == 1.0);
  CHECK(scaling_point_to_json(us[1])["setting"] == 16);
}

TEST_CASE("command-line smoke test") {
  const auto dir = fresh_dir("tsearch_cli");
  const auto spec = dir / "spec.json";
  std::ofstream(spec) << R"({"seed": 3, "groups": [{"name": "long", "count": 6}]})";
  const auto corpus = (dir / "corpus.jsonl").string();
  CHECK(run_cli("gen-corpus --spec '" + spec.string() + "' -o '" + corpus + "'") == 0);
  CHECK(load_manifest(corpus).size() == 6);
  CHECK(run_cli("run -m '" + corpus + "' -s us -b oracle -o '" + (dir / "us").string() + "'") == 0);
  CHECK(run_cli("run -m '" + corpus + "' -s ts-bfs -b oracle -j 2 -o '" + (dir / "bfs").string() + "'") == 0);
  CHECK(fs::exists(dir / "bfs" / "traces.jsonl"));
  CHECK(run_cli("analyze '" + (dir / "us").string() + "' '" + (dir / "bfs").string() + "' -o '" +
                (dir / "analysis").string() + "'") == 0);
  CHECK(fs::exists(dir / "analysis" / "confidence.json"));
  CHECK(fs::exists(dir / "analysis" / "curve.jsonl"));
  CHECK(run_cli("analyze '" + (dir / "us").string() + "' --thresholds 0.5,1.01 -o '" + (dir / "bad").string() +
                "'") == 1);
  CHECK(run_cli("scaling -m '" + corpus + "' -s ts-bfs -g 1,2 -o '" + (dir / "scaling.jsonl").string() + "'") == 0);
  std::ifstream scaling(dir / "scaling.jsonl");
  int lines = 0;
  for (std::string line; std::getline(scaling, line);) ++lines;
  CHECK(lines == 2);
  CHECK(run_cli("run -m '" + corpus + "' -s dfs -o '" + (dir / "x").string() + "'") != 0);
  CHECK(run_cli("run -m '" + corpus + "' -s us -b stub -o '" + (dir / "x").string() + "'") == 1);
  const auto script = dir / "script.json";
  std::ofstream(script) << R"({"answers": [{"default": true, "error": "down"}]})";
  CHECK(run_cli("run -m '" + corpus + "' -s us -b stub --stub-script '" + script.string() + "' -o '" +
                (dir / "aborted").string() + "'") == 2);
  fs::remove_all(dir);
}
