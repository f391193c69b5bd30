#pragma once

// Core value types for temporal search over long videos: frame intervals,
// model verdicts, search nodes, the shared keyframe memory and the search
// configuration.

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace tsearch {

// ----------------------------------------------------------------------------
// Errors
// ----------------------------------------------------------------------------

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration, template or input data detected at load time.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Violated precondition on a domain value (bad interval, bad log-prob...).
class DomainError : public Error {
 public:
  using Error::Error;
};

using FrameIndex = std::int64_t;

// ----------------------------------------------------------------------------
// Video and query
// ----------------------------------------------------------------------------

/// Exact frames-per-second value, e.g. 30000/1001.
struct Rational {
  std::int64_t num = 1;
  std::int64_t den = 1;

  double to_double() const { return static_cast<double>(num) / static_cast<double>(den); }

  /// Parses "30", "29.97" or "30000/1001".
  static Rational parse(const std::string& text);
  std::string to_string() const;

  friend bool operator==(const Rational&, const Rational&) = default;
};

struct VideoSource {
  std::string id;
  FrameIndex total_frames = 1;
  Rational fps;

  /// Seconds at which frame `index` is shown.
  double timestamp(FrameIndex index) const {
    return static_cast<double>(index) * static_cast<double>(fps.den) / static_cast<double>(fps.num);
  }
  double duration_seconds() const { return timestamp(total_frames); }

  /// Throws DomainError unless total_frames >= 1 and fps > 0.
  void validate() const;
};

struct QueryOption {
  char label = 'A';
  std::string text;
};

struct Query {
  std::string question;
  std::vector<QueryOption> options;
  std::optional<char> ground_truth;

  bool has_option(char label) const;
  /// Labels must be 'A', 'B', ... consecutive; 2..26 options or none.
  void validate() const;
};

// ----------------------------------------------------------------------------
// Interval
// ----------------------------------------------------------------------------

/// Half-open frame range [start, end).
struct Interval {
  FrameIndex start = 0;
  FrameIndex end = 1;

  FrameIndex length() const { return end - start; }
  bool contains(const Interval& other) const { return start <= other.start && other.end <= end; }
  bool contains(FrameIndex index) const { return start <= index && index < end; }
  bool valid_within(FrameIndex total_frames) const {
    return 0 <= start && start < end && end <= total_frames;
  }
  std::string to_string() const;

  friend bool operator==(const Interval&, const Interval&) = default;
  friend auto operator<=>(const Interval&, const Interval&) = default;
};

/// Frames shared by both intervals.
FrameIndex overlap_frames(const Interval& a, const Interval& b);

/// Intersection-over-union under the frame-count measure.
double interval_iou(const Interval& a, const Interval& b);

// ----------------------------------------------------------------------------
// Model output
// ----------------------------------------------------------------------------

/// Geometric-mean token probability, exp(mean(log p)). Throws DomainError
/// for an empty list ("no generated tokens") or a positive entry
/// ("invalid log-probability").
double compute_confidence(std::span<const double> token_logprobs);

struct ModelVerdict {
  std::string answer_text;
  std::optional<char> parsed_choice;
  std::vector<double> token_logprobs;
  double confidence = 0.0;
  std::optional<double> self_eval;
};

/// w_conf * confidence + w_eval * self_eval, with an absent self_eval
/// counting as zero. Negative weights are a ConfigError.
double node_value(double confidence, std::optional<double> self_eval, double w_conf, double w_eval);

// ----------------------------------------------------------------------------
// Search nodes
// ----------------------------------------------------------------------------

using NodeId = std::int32_t;

enum class NodeOrigin { root, heuristic, uniform_split };
enum class NodeStatus { frontier, expanded, terminal };

const char* to_string(NodeOrigin origin);
const char* to_string(NodeStatus status);

struct SearchNode {
  NodeId id = 0;
  Interval interval;
  ModelVerdict verdict;
  double value = 0.0;
  std::optional<NodeId> parent_id;
  int depth = 0;
  NodeOrigin origin = NodeOrigin::root;
  NodeStatus status = NodeStatus::frontier;
};

// ----------------------------------------------------------------------------
// Keyframe memory
// ----------------------------------------------------------------------------

struct KeyframeNote {
  double timestamp = 0.0;  // seconds, midpoint of source_interval
  Interval source_interval;
  std::string text;
  double source_value = 0.0;  // value of the node that produced the note; used for eviction
};

/// Timestamp-sorted notes shared across a whole search run, bounded by cap.
class KeyframeMemory {
 public:
  static constexpr std::size_t kDefaultCap = 32;

  explicit KeyframeMemory(std::size_t cap = kDefaultCap) : cap_(cap) {}

  /// Inserts in timestamp order (after existing notes with equal timestamp),
  /// then evicts the lowest-value notes while over cap. Returns false if the
  /// new note itself was evicted. Empty text is rejected.
  bool add(KeyframeNote note);

  const std::vector<KeyframeNote>& notes() const { return notes_; }
  std::size_t cap() const { return cap_; }
  bool empty() const { return notes_.empty(); }
  std::size_t size() const { return notes_.size(); }

  /// "[t=<seconds>s] <text>" lines in chronological order.
  std::string render() const;

 private:
  std::vector<KeyframeNote> notes_;
  std::vector<std::uint64_t> seq_;  // insertion sequence per note, parallel to notes_
  std::uint64_t next_seq_ = 0;
  std::size_t cap_;
};

// ----------------------------------------------------------------------------
// Configuration
// ----------------------------------------------------------------------------

enum class FinalSelection { all_visited, frontier_only };
enum class FrameSampling { midpoint, seeded_random };

const char* to_string(FinalSelection mode);
const char* to_string(FrameSampling mode);

struct SearchConfig {
  int k = 5;                 // max iterations
  int n = 6;                 // expansions per step
  int n_f = 8;               // frames per inference call
  double c1 = 0.9;           // early-stop confidence
  double c2 = 0.7;           // keyframe-memory threshold
  double w_conf = 1.0;
  double w_eval = 1.0;
  int parallel_width = 1;
  std::uint64_t seed = 0;
  FinalSelection final_selection = FinalSelection::all_visited;
  std::optional<int> min_interval_frames;  // defaults to n_f
  double dedup_iou = 0.9;
  double visited_iou = 0.95;
  std::size_t memory_cap = KeyframeMemory::kDefaultCap;
  int utv_intervals = 8;
  FrameSampling frame_sampling = FrameSampling::midpoint;

  int effective_min_interval() const { return min_interval_frames.value_or(n_f); }

  /// Throws ConfigError on any out-of-range field or c2 > c1.
  void validate() const;
};

}  // namespace tsearch
