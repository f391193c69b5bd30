#pragma once

// Temporal search strategies: single-pass uniform sampling, uniform temporal
// voting, sequential zoom-in search and best-first tree search over
// intervals.

#include "tsearch/backend.hpp"
#include "tsearch/domain.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace tsearch {

/// Max-priority queue of node ids keyed by value. Equal values pop in
/// insertion order.
class Frontier {
 public:
  void push(NodeId id, double value);
  /// Removes and returns the best entry; nullopt when empty.
  std::optional<NodeId> pop();
  std::optional<NodeId> peek() const;

  bool empty() const { return heap_.empty(); }
  std::size_t size() const { return heap_.size(); }
  /// Ids currently queued, in no particular order.
  std::vector<NodeId> contents() const;

 private:
  struct Entry {
    double value;
    std::uint64_t seq;
    NodeId id;
  };
  // True when a ranks below b.
  static bool below(const Entry& a, const Entry& b) {
    if (a.value != b.value) return a.value < b.value;
    return a.seq > b.seq;
  }
  struct Below {
    bool operator()(const Entry& a, const Entry& b) const { return below(a, b); }
  };
  std::vector<Entry> heap_;
  std::uint64_t next_seq_ = 0;
};

struct CallCounts {
  int answer = 0;
  int evaluate = 0;
  int propose = 0;
  int describe = 0;

  int total() const { return answer + evaluate + propose + describe; }
  friend bool operator==(const CallCounts&, const CallCounts&) = default;
};

/// Ordered event log of one search run. Each event is a JSON object whose
/// first key "event" names it; intervals are stored as "[s,e)" strings.
class SearchTrace {
 public:
  void add(nlohmann::ordered_json event);

  const std::vector<nlohmann::ordered_json>& events() const { return events_; }
  CallCounts calls;

  /// One line per event ("pop node=0 interval=[0,100) value=1.1000"),
  /// reals with four decimals, then a final "calls ..." line.
  std::string to_text() const;
  nlohmann::ordered_json to_json() const;
  static SearchTrace from_json(const nlohmann::ordered_json& j);

 private:
  std::vector<nlohmann::ordered_json> events_;
};

enum class StopReason { confidence_exceeded_c1, budget_exhausted };
const char* to_string(StopReason reason);

enum class Strategy { us, utv, ts, ts_bfs };
const char* to_string(Strategy strategy);
Strategy parse_strategy(const std::string& name);

struct SearchResult {
  ModelVerdict answer;
  Interval chosen_interval;
  double value = 0.0;
  StopReason stop_reason = StopReason::budget_exhausted;
  SearchTrace trace;
  int calls_used = 0;
  std::vector<SearchNode> nodes;  // every evaluated node, by id
  KeyframeMemory memory;
  bool had_error = false;
};

/// One answer call on n_f frames spread over the whole video.
SearchResult run_uniform_sampling(const VideoSource& video, const Query& query, Backend& backend,
                                  const SearchConfig& config);

/// One answer per uniform piece of the video; verdicts whose confidence
/// reaches the mean vote, ties go to the highest single confidence, then to
/// the earlier interval.
SearchResult run_uniform_temporal_voting(const VideoSource& video, const Query& query, Backend& backend,
                                         const SearchConfig& config, int num_intervals);
SearchResult run_uniform_temporal_voting(const VideoSource& video, const Query& query, Backend& backend,
                                         const SearchConfig& config);

/// Sequential zoom-in: one proposed interval per step, early exit above c1,
/// keyframe notes above c2, latest answer after k steps.
SearchResult run_sequential_ts(const VideoSource& video, const Query& query, Backend& backend,
                               const SearchConfig& config);

/// Best-first tree search over intervals with heuristic and uniform
/// expansion, self-evaluated node values and a shared keyframe memory.
SearchResult run_ts_bfs(const VideoSource& video, const Query& query, Backend& backend,
                        const SearchConfig& config);

SearchResult run_strategy(Strategy strategy, const VideoSource& video, const Query& query, Backend& backend,
                          const SearchConfig& config);

}  // namespace tsearch
