#include "tsearch/sampling.hpp"

#include <algorithm>

namespace tsearch {

namespace {

void check_interval(const Interval& interval) {
  if (interval.start < 0 || interval.length() < 1) {
    throw DomainError("invalid interval " + interval.to_string());
  }
}

// Knuth's selection sampling: picks `want` of `items` without replacement,
// keeping their relative order.
template <typename T>
std::vector<T> sample_in_order(const std::vector<T>& items, std::size_t want, SplitMix64& rng) {
  if (want >= items.size()) return items;
  std::vector<T> out;
  out.reserve(want);
  std::size_t remaining = items.size();
  for (const auto& item : items) {
    if (rng.below(remaining) < want - out.size()) out.push_back(item);
    --remaining;
    if (out.size() == want) break;
  }
  return out;
}

}  // namespace

FrameSample uniform_sample(const Interval& interval, int n_f) {
  check_interval(interval);
  if (n_f < 1) throw DomainError("n_f must be >= 1");
  FrameSample s{interval, {}};
  s.indices.reserve(static_cast<std::size_t>(n_f));
  const FrameIndex len = interval.length();
  for (FrameIndex i = 0; i < n_f; ++i) {
    // floor((i + 0.5) * len / n_f) in exact integer arithmetic.
    s.indices.push_back(interval.start + ((2 * i + 1) * len) / (2 * static_cast<FrameIndex>(n_f)));
  }
  return s;
}

FrameSample seeded_random_sample(const Interval& interval, int n_f, std::uint64_t seed) {
  check_interval(interval);
  if (n_f < 1) throw DomainError("n_f must be >= 1");
  SplitMix64 rng(mix_seed({seed, static_cast<std::uint64_t>(interval.start),
                           static_cast<std::uint64_t>(interval.end), static_cast<std::uint64_t>(n_f)}));
  FrameSample s{interval, {}};
  const FrameIndex len = interval.length();
  for (FrameIndex i = 0; i < n_f; ++i) {
    const FrameIndex lo = (i * len) / n_f;
    const FrameIndex hi = std::max(lo + 1, ((i + 1) * len) / n_f);
    s.indices.push_back(interval.start + lo + static_cast<FrameIndex>(rng.below(static_cast<std::uint64_t>(hi - lo))));
  }
  return s;
}

FrameSample sample_frames(const Interval& interval, const SearchConfig& config) {
  if (config.frame_sampling == FrameSampling::seeded_random) {
    return seeded_random_sample(interval, config.n_f, config.seed);
  }
  return uniform_sample(interval, config.n_f);
}

std::vector<Interval> uniform_split(const Interval& interval, int n) {
  check_interval(interval);
  if (n < 1) throw DomainError("split count must be >= 1");
  const FrameIndex len = interval.length();
  const FrameIndex parts = n;
  std::vector<Interval> out;
  out.reserve(static_cast<std::size_t>(n));
  FrameIndex prev = interval.start;
  for (FrameIndex j = 1; j <= parts; ++j) {
    // round(j * len / n), halves rounded up.
    const FrameIndex boundary = interval.start + (2 * j * len + parts) / (2 * parts);
    if (boundary > prev) out.push_back({prev, boundary});
    prev = std::max(prev, boundary);
  }
  return out;
}

std::optional<Interval> clamp_interval(const Interval& interval, const Interval& bounds) {
  Interval c{std::max(interval.start, bounds.start), std::min(interval.end, bounds.end)};
  if (c.end <= c.start) return std::nullopt;
  return c;
}

std::vector<Candidate> select_candidates(const std::vector<Interval>& heuristic,
                                         const std::vector<Interval>& uniform, const Interval& parent,
                                         const CandidateOptions& options, SplitMix64& rng) {
  if (options.n < 1) throw DomainError("candidate count must be >= 1");
  std::vector<Candidate> kept;
  auto consider = [&](const Interval& raw, NodeOrigin origin) {
    auto c = clamp_interval(raw, parent);
    if (!c || c->length() < options.min_len) return;
    for (const auto& k : kept) {
      if (interval_iou(k.interval, *c) > options.dedup_iou) return;
    }
    kept.push_back({*c, origin});
  };
  for (const auto& h : heuristic) consider(h, NodeOrigin::heuristic);
  for (const auto& u : uniform) consider(u, NodeOrigin::uniform_split);

  if (kept.empty()) {
    std::vector<Candidate> fallback;
    for (const auto& piece : uniform_split(parent, options.n)) fallback.push_back({piece, NodeOrigin::uniform_split});
    return fallback;
  }

  std::vector<Candidate> heur, unif;
  for (const auto& c : kept) (c.origin == NodeOrigin::heuristic ? heur : unif).push_back(c);

  const auto n = static_cast<std::size_t>(options.n);
  if (heur.size() >= n) return sample_in_order(heur, n, rng);
  auto fill = sample_in_order(unif, n - heur.size(), rng);
  heur.insert(heur.end(), fill.begin(), fill.end());
  return heur;
}

}  // namespace tsearch
