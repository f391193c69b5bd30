#include "tsearch/search.hpp"

#include "random_backend.hpp"
#include "scenarios.hpp"

#include <doctest.h>

#include <deque>

using namespace tsearch;

namespace {

// Linear-scan max queue: highest value wins, earliest push on ties.
class BruteQueue {
 public:
  void push(NodeId id, double value) { items_.push_back({id, value}); }
  std::optional<NodeId> pop() {
    if (items_.empty()) return std::nullopt;
    std::size_t best = 0;
    for (std::size_t i = 1; i < items_.size(); ++i) {
      if (items_[i].second > items_[best].second) best = i;
    }
    const auto id = items_[best].first;
    items_.erase(items_.begin() + static_cast<std::ptrdiff_t>(best));
    return id;
  }

 private:
  std::deque<std::pair<NodeId, double>> items_;
};

const VideoSource kLong{"long", 3600, {1, 1}};
const Query kQuery{"q", {{'A', "a"}, {'B', "b"}, {'C', "c"}, {'D', "d"}}, std::nullopt};

SearchConfig random_config(SplitMix64& rng) {
  SearchConfig c;
  c.k = 1 + static_cast<int>(rng.below(6));
  c.n = 1 + static_cast<int>(rng.below(6));
  c.n_f = 1 + static_cast<int>(rng.below(8));
  c.c2 = 0.3 + 0.6 * rng.uniform();
  c.c1 = c.c2 + (1.0 - c.c2) * rng.uniform();
  c.seed = rng.next();
  c.final_selection = rng.below(2) ? FinalSelection::all_visited : FinalSelection::frontier_only;
  return c;
}

}  // namespace

TEST_CASE("hand-derived traces") {
  for (const auto& s : scenarios::all()) {
    INFO(to_string(s.strategy), ": ", s.name);
    CHECK(scenarios::run(s) == s.expected);
    CHECK(scenarios::run(s, 4) == s.expected);
  }
}

TEST_CASE("frontier matches a linear-scan queue") {
  SplitMix64 rng(11);
  for (int round = 0; round < 500; ++round) {
    Frontier f;
    BruteQueue q;
    NodeId next = 0;
    for (int op = 0; op < 60; ++op) {
      if (rng.below(3) != 0) {
        // Few distinct values so ties are common.
        const double v = static_cast<double>(rng.below(5)) / 4.0;
        f.push(next, v);
        q.push(next, v);
        ++next;
      } else {
        REQUIRE(f.pop() == q.pop());
      }
    }
    while (!f.empty()) REQUIRE(f.pop() == q.pop());
    CHECK(q.pop() == std::nullopt);
  }
  Frontier empty;
  CHECK(empty.pop() == std::nullopt);
  CHECK(empty.peek() == std::nullopt);
}

TEST_CASE("final answer comes from the best child") {
  ScriptedBackend b;
  scenarios::node(b, {0, 64}, "A", 0.5, 0.5);
  scenarios::propose(b, {0, 64}, "nothing");
  scenarios::node(b, {0, 32}, "B", 0.6, 0.6);
  scenarios::node(b, {32, 64}, "C", 0.7, 0.7);
  auto config = scenarios::base_config();
  config.k = 1;
  const auto r = run_ts_bfs(scenarios::kVideo, scenarios::kQuery, b, config);
  CHECK(r.nodes.size() == 3);
  CHECK(r.nodes[0].value == doctest::Approx(1.0));
  CHECK(r.nodes[1].value == doctest::Approx(1.2));
  CHECK(r.nodes[2].value == doctest::Approx(1.4));
  CHECK(r.answer.parsed_choice == 'C');
  CHECK(r.chosen_interval == Interval{32, 64});
  CHECK(r.stop_reason == StopReason::budget_exhausted);
  // Memory was written for the 0.7 child only when above c2.
  CHECK(r.memory.size() == 0);
}

TEST_CASE("uniform temporal voting") {
  const VideoSource video{"v", 90, {1, 1}};
  SUBCASE("majority of confident verdicts") {
    ScriptedBackend b;
    b.answers().on({0, 30}, scenarios::ans("A", 0.8));
    b.answers().on({30, 60}, scenarios::ans("A", 0.7));
    b.answers().on({60, 90}, scenarios::ans("B", 0.2));
    const auto r = run_uniform_temporal_voting(video, scenarios::kQuery, b, SearchConfig{}, 3);
    CHECK(r.answer.parsed_choice == 'A');
    CHECK(r.trace.calls.answer == 3);
    CHECK(r.calls_used == 3);
  }
  SUBCASE("a tie goes to the earlier interval") {
    ScriptedBackend b;
    b.answers().on({0, 45}, scenarios::ans("A", 0.9));
    b.answers().on({45, 90}, scenarios::ans("B", 0.9));
    const auto r = run_uniform_temporal_voting(video, scenarios::kQuery, b, SearchConfig{}, 2);
    CHECK(r.answer.parsed_choice == 'A');
  }
  SUBCASE("a tie in votes goes to the higher confidence") {
    ScriptedBackend b;
    b.answers().on({0, 45}, scenarios::ans("A", 0.8));
    b.answers().on({45, 90}, scenarios::ans("B", 0.9));
    const auto r = run_uniform_temporal_voting(video, scenarios::kQuery, b, SearchConfig{}, 2);
    CHECK(r.answer.parsed_choice == 'B');
  }
  SUBCASE("one interval equals single-pass sampling") {
    ScriptedBackend b;
    b.answers().on({0, 90}, scenarios::ans("D", 0.4));
    const auto utv = run_uniform_temporal_voting(video, scenarios::kQuery, b, SearchConfig{}, 1);
    const auto us = run_uniform_sampling(video, scenarios::kQuery, b, SearchConfig{});
    CHECK(utv.answer.parsed_choice == us.answer.parsed_choice);
    CHECK(utv.answer.confidence == us.answer.confidence);
  }
  SUBCASE("zero intervals are rejected") {
    ScriptedBackend b;
    CHECK_THROWS_AS(run_uniform_temporal_voting(video, scenarios::kQuery, b, SearchConfig{}, 0), ConfigError);
  }
}

TEST_CASE("single-pass sampling makes one call on n_f frames") {
  ScriptedBackend b;
  b.answers().set_default(scenarios::ans("B", 0.6));
  const auto r = run_uniform_sampling(kLong, kQuery, b, SearchConfig{});
  CHECK(r.calls_used == 1);
  REQUIRE(b.calls().size() == 1);
  CHECK(b.calls()[0].interval == Interval{0, 3600});
  CHECK(r.stop_reason == StopReason::budget_exhausted);
}

TEST_CASE("sequential search stops at the zoom limit") {
  const VideoSource video{"v", 8, {1, 1}};
  ScriptedBackend b;
  b.answers().set_default(scenarios::ans("A", 0.3));
  b.proposals().set_default({"none", std::nullopt});
  auto config = scenarios::base_config();
  config.k = 5;
  const auto r = run_sequential_ts(video, scenarios::kQuery, b, config);
  const auto text = r.trace.to_text();
  CHECK(text.find("propose step=1 from=0 interval=[2,6) source=center_half") != std::string::npos);
  CHECK(text.find("zoom_limit step=2 node=1") != std::string::npos);
  CHECK(r.chosen_interval == Interval{2, 6});
  CHECK(r.trace.calls.answer == 2);
  CHECK(r.trace.calls.propose == 2);
}

TEST_CASE("tree search leaves unzoomable nodes terminal") {
  const VideoSource video{"v", 10, {1, 1}};
  ScriptedBackend b;
  b.answers().set_default(scenarios::ans("A", 0.3));
  b.evaluations().set_default(ScriptedBackend::yes_with(0.5));
  b.proposals().set_default({"none", std::nullopt});
  auto config = scenarios::base_config();
  config.k = 5;
  const auto r = run_ts_bfs(video, scenarios::kQuery, b, config);
  const auto text = r.trace.to_text();
  CHECK(r.nodes.size() == 3);
  CHECK(text.find("expand node=1 heuristic=- uniform=[0,3),[3,5) selected=-") != std::string::npos);
  CHECK(text.find("frontier_empty step=4") != std::string::npos);
  for (const auto& n : r.nodes) CHECK(n.interval.length() >= 4);
}

TEST_CASE("call counts stay within budget") {
  SplitMix64 rng(21);
  for (int i = 0; i < 200; ++i) {
    const auto config = random_config(rng);
    randomized::HashBackend backend(rng.next());
    const auto bfs = run_ts_bfs(kLong, kQuery, backend, config);
    CHECK(bfs.trace.calls.answer <= 1 + config.k * config.n);
    CHECK(bfs.trace.calls.propose <= config.k);
    CHECK(bfs.trace.calls.evaluate == bfs.trace.calls.answer);
    CHECK(bfs.calls_used == bfs.trace.calls.total());
    CHECK(backend.answers() == bfs.trace.calls.answer);
    const auto ts = run_sequential_ts(kLong, kQuery, backend, config);
    CHECK(ts.trace.calls.answer <= 1 + config.k);
    CHECK(ts.trace.calls.evaluate == 0);
  }
}

TEST_CASE("children lie inside their parents and final values dominate") {
  SplitMix64 rng(22);
  for (int i = 0; i < 200; ++i) {
    const auto config = random_config(rng);
    randomized::HashBackend backend(rng.next());
    const auto r = run_ts_bfs(kLong, kQuery, backend, config);
    for (const auto& n : r.nodes) {
      if (!n.parent_id) continue;
      const auto& p = r.nodes[static_cast<std::size_t>(*n.parent_id)];
      CHECK(p.interval.contains(n.interval));
      CHECK(n.depth == p.depth + 1);
      CHECK(n.interval.length() >= config.effective_min_interval());
    }
    const bool any_parsed =
        std::any_of(r.nodes.begin(), r.nodes.end(), [](const SearchNode& n) { return n.verdict.parsed_choice; });
    if (r.stop_reason == StopReason::confidence_exceeded_c1) {
      CHECK(r.answer.confidence > config.c1);
    } else if (config.final_selection == FinalSelection::all_visited) {
      for (const auto& n : r.nodes) {
        if (any_parsed && !n.verdict.parsed_choice) continue;
        CHECK(r.value >= n.value);
      }
    }
  }
}

TEST_CASE("runs are deterministic and independent of parallel width") {
  SplitMix64 rng(23);
  for (int i = 0; i < 100; ++i) {
    auto config = random_config(rng);
    const auto seed = rng.next();
    randomized::HashBackend a(seed), b(seed), c(seed);
    config.parallel_width = 1;
    const auto r1 = run_ts_bfs(kLong, kQuery, a, config);
    const auto r2 = run_ts_bfs(kLong, kQuery, b, config);
    config.parallel_width = 6;
    const auto r3 = run_ts_bfs(kLong, kQuery, c, config);
    CHECK(r1.trace.to_text() == r2.trace.to_text());
    CHECK(r1.trace.to_text() == r3.trace.to_text());
    CHECK(r1.answer.answer_text == r3.answer.answer_text);
  }
}

TEST_CASE("failures end the run with the best answer so far") {
  SUBCASE("a failed child answer") {
    ScriptedBackend b;
    scenarios::node(b, {0, 64}, "A", 0.5, 0.5);
    scenarios::propose(b, {0, 64}, "nothing");
    scenarios::node(b, {0, 32}, "B", 0.6, 0.9);
    b.answers().on({32, 64}, {"", {}, std::string("server down")});
    const auto r = run_ts_bfs(scenarios::kVideo, scenarios::kQuery, b, scenarios::base_config());
    CHECK(r.had_error);
    CHECK(r.answer.parsed_choice == 'B');
    CHECK(r.trace.to_text().find("error stage=answer message=\"server down\"") != std::string::npos);
    CHECK(r.trace.to_text().find("selection=best_so_far") != std::string::npos);
  }
  SUBCASE("a failed evaluation scores zero") {
    ScriptedBackend b;
    b.answers().on({0, 64}, scenarios::ans("A", 0.5));
    b.evaluations().on({0, 64}, {{}, std::string("eval down")});
    b.proposals().set_default({"nothing", std::nullopt});
    scenarios::node(b, {0, 32}, "B", 0.2, 0.1);
    scenarios::node(b, {32, 64}, "C", 0.2, 0.2);
    auto config = scenarios::base_config();
    config.k = 1;
    const auto r = run_ts_bfs(scenarios::kVideo, scenarios::kQuery, b, config);
    CHECK(r.had_error);
    CHECK(r.nodes[0].value == doctest::Approx(0.5));
    CHECK(r.answer.parsed_choice == 'A');
  }
  SUBCASE("a failed proposal falls back to uniform pieces") {
    ScriptedBackend b;
    scenarios::node(b, {0, 64}, "A", 0.5, 0.5);
    b.proposals().on({0, 64}, {"", std::string("timeout")});
    scenarios::node(b, {0, 32}, "B", 0.2, 0.1);
    scenarios::node(b, {32, 64}, "C", 0.2, 0.2);
    auto config = scenarios::base_config();
    config.k = 1;
    const auto r = run_ts_bfs(scenarios::kVideo, scenarios::kQuery, b, config);
    CHECK(r.nodes.size() == 3);
    CHECK(r.had_error);
  }
  SUBCASE("a failed root answer propagates") {
    ScriptedBackend b;
    b.answers().on({0, 64}, {"", {}, std::string("down")});
    CHECK_THROWS_AS(run_sequential_ts(scenarios::kVideo, scenarios::kQuery, b, scenarios::base_config()),
                    BackendError);
  }
  SUBCASE("random failures never escape past the root") {
    SplitMix64 rng(24);
    for (int i = 0; i < 100; ++i) {
      const auto config = random_config(rng);
      randomized::HashBackend backend(rng.next(), 0.1);
      try {
        const auto r = run_ts_bfs(kLong, kQuery, backend, config);
        CHECK(r.trace.calls.answer <= 1 + config.k * config.n);
      } catch (const BackendError&) {
        CHECK(backend.answers() == 1);
      }
    }
  }
}

TEST_CASE("trace JSON round trip") {
  for (const auto& s : scenarios::all()) {
    ScriptedBackend b;
    s.script(b);
    const auto r = run_strategy(s.strategy, scenarios::kVideo, scenarios::kQuery, b, s.config);
    const auto back = SearchTrace::from_json(nlohmann::ordered_json::parse(r.trace.to_json().dump()));
    CHECK(back.to_text() == r.trace.to_text());
    CHECK(back.calls == r.trace.calls);
  }
}

TEST_CASE("strategy names") {
  CHECK(parse_strategy("ts-bfs") == Strategy::ts_bfs);
  CHECK(std::string(to_string(Strategy::utv)) == "utv");
  CHECK_THROWS_AS(parse_strategy("dfs"), ConfigError);
}

TEST_CASE("sequential search writes memory then returns early") {
  ScriptedBackend b;
  b.answers().on({0, 64}, scenarios::ans("A", 0.5));
  scenarios::propose(b, {0, 64}, "[[0, 32]]");
  b.answers().on({0, 32}, scenarios::ans("B", 0.8));
  b.descriptions().on({0, 32}, {"the door swings open", std::nullopt});
  scenarios::propose(b, {0, 32}, "[[8, 24]]");
  b.answers().on({8, 24}, scenarios::ans("C", 0.95));
  const auto r = run_sequential_ts(scenarios::kVideo, scenarios::kQuery, b, scenarios::base_config());
  CHECK(r.memory.size() == 1);
  CHECK(r.stop_reason == StopReason::confidence_exceeded_c1);
  CHECK(r.answer.parsed_choice == 'C');
  CHECK(r.trace.calls == CallCounts{3, 0, 2, 1});
}
