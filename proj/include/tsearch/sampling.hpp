#pragma once

#include "tsearch/domain.hpp"
#include "tsearch/rng.hpp"

#include <vector>

namespace tsearch {

/// The frames handed to one inference call.
struct FrameSample {
  Interval interval;
  std::vector<FrameIndex> indices;
};

/// Midpoint rule: index_i = start + floor((i + 0.5) * length / n_f).
/// Short intervals repeat indices so exactly n_f are returned.
FrameSample uniform_sample(const Interval& interval, int n_f);

/// Stratified variant: one uniformly drawn frame per stratum. Deterministic
/// for a given seed; indices stay sorted and in bounds.
FrameSample seeded_random_sample(const Interval& interval, int n_f, std::uint64_t seed);

/// Dispatches on config.frame_sampling.
FrameSample sample_frames(const Interval& interval, const SearchConfig& config);

/// n contiguous pieces with boundaries start + round(j * length / n).
/// Empty pieces are dropped, so fewer than n come back when length < n.
std::vector<Interval> uniform_split(const Interval& interval, int n);

/// Intersection of `interval` with `bounds`; nullopt when empty.
std::optional<Interval> clamp_interval(const Interval& interval, const Interval& bounds);

struct Candidate {
  Interval interval;
  NodeOrigin origin = NodeOrigin::uniform_split;

  friend bool operator==(const Candidate&, const Candidate&) = default;
};

struct CandidateOptions {
  int n = 6;
  int min_len = 1;
  double dedup_iou = 0.9;
};

/// Builds the child set of one expansion: clamp to parent, drop pieces
/// shorter than min_len, drop near-duplicates (IoU > dedup_iou, earlier
/// listed wins, heuristic listed before uniform), take heuristic proposals
/// first and fill the remaining slots with uniform pieces. When a group
/// has more entries than free slots, the kept ones are drawn without
/// replacement from `rng`, preserving their listed order. An empty pool
/// falls back to uniform_split(parent, n).
std::vector<Candidate> select_candidates(const std::vector<Interval>& heuristic,
                                         const std::vector<Interval>& uniform, const Interval& parent,
                                         const CandidateOptions& options, SplitMix64& rng);

}  // namespace tsearch
