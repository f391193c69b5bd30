#include "tsearch/domain.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <numeric>

namespace tsearch {

Rational Rational::parse(const std::string& text) {
  auto parse_int = [&](std::string_view s) {
    std::int64_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
      throw ConfigError("invalid fps value: '" + text + "'");
    }
    return v;
  };
  Rational r;
  std::string_view s(text);
  if (auto slash = s.find('/'); slash != std::string_view::npos) {
    r.num = parse_int(s.substr(0, slash));
    r.den = parse_int(s.substr(slash + 1));
  } else if (auto dot = s.find('.'); dot != std::string_view::npos) {
    auto frac = s.substr(dot + 1);
    if (frac.size() > 9) frac = frac.substr(0, 9);
    std::int64_t scale = 1;
    for (std::size_t i = 0; i < frac.size(); ++i) scale *= 10;
    r.num = parse_int(s.substr(0, dot)) * scale + (frac.empty() ? 0 : parse_int(frac));
    r.den = scale;
  } else {
    r.num = parse_int(s);
    r.den = 1;
  }
  if (r.num <= 0 || r.den <= 0) throw ConfigError("fps must be positive: '" + text + "'");
  auto g = std::gcd(r.num, r.den);
  r.num /= g;
  r.den /= g;
  return r;
}

std::string Rational::to_string() const {
  return den == 1 ? std::to_string(num) : fmt::format("{}/{}", num, den);
}

void VideoSource::validate() const {
  if (total_frames < 1) throw DomainError("video '" + id + "' has no frames");
  if (fps.num <= 0 || fps.den <= 0) throw DomainError("video '" + id + "' has non-positive fps");
}

bool Query::has_option(char label) const {
  return std::any_of(options.begin(), options.end(), [&](const QueryOption& o) { return o.label == label; });
}

void Query::validate() const {
  if (options.empty()) return;
  if (options.size() < 2 || options.size() > 26) {
    throw DomainError(fmt::format("expected 2..26 options, got {}", options.size()));
  }
  for (std::size_t i = 0; i < options.size(); ++i) {
    if (options[i].label != static_cast<char>('A' + i)) {
      throw DomainError(fmt::format("option {} has label '{}', expected '{}'", i, options[i].label,
                                    static_cast<char>('A' + i)));
    }
  }
  if (ground_truth && !has_option(*ground_truth)) {
    throw DomainError(fmt::format("ground truth '{}' is not an option label", *ground_truth));
  }
}

std::string Interval::to_string() const { return fmt::format("[{},{})", start, end); }

FrameIndex overlap_frames(const Interval& a, const Interval& b) {
  return std::max<FrameIndex>(0, std::min(a.end, b.end) - std::max(a.start, b.start));
}

double interval_iou(const Interval& a, const Interval& b) {
  const FrameIndex inter = overlap_frames(a, b);
  const FrameIndex uni = a.length() + b.length() - inter;
  if (uni <= 0) return 0.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

double compute_confidence(std::span<const double> token_logprobs) {
  if (token_logprobs.empty()) throw DomainError("no generated tokens");
  double sum = 0.0;
  for (double lp : token_logprobs) {
    if (!(lp <= 0.0)) throw DomainError("invalid log-probability");
    sum += lp;
  }
  return std::exp(sum / static_cast<double>(token_logprobs.size()));
}

double node_value(double confidence, std::optional<double> self_eval, double w_conf, double w_eval) {
  if (w_conf < 0.0 || w_eval < 0.0) throw ConfigError("value weights must be non-negative");
  return w_conf * confidence + w_eval * self_eval.value_or(0.0);
}

const char* to_string(NodeOrigin origin) {
  switch (origin) {
    case NodeOrigin::root: return "root";
    case NodeOrigin::heuristic: return "heuristic";
    case NodeOrigin::uniform_split: return "uniform";
  }
  return "?";
}

const char* to_string(NodeStatus status) {
  switch (status) {
    case NodeStatus::frontier: return "frontier";
    case NodeStatus::expanded: return "expanded";
    case NodeStatus::terminal: return "terminal";
  }
  return "?";
}

const char* to_string(FinalSelection mode) {
  return mode == FinalSelection::all_visited ? "all_visited" : "frontier_only";
}

const char* to_string(FrameSampling mode) {
  return mode == FrameSampling::midpoint ? "midpoint" : "seeded_random";
}

bool KeyframeMemory::add(KeyframeNote note) {
  if (note.text.empty()) throw DomainError("keyframe note text is empty");
  auto pos = std::upper_bound(notes_.begin(), notes_.end(), note.timestamp,
                              [](double t, const KeyframeNote& n) { return t < n.timestamp; });
  const auto offset = pos - notes_.begin();
  const std::uint64_t seq = next_seq_++;
  notes_.insert(pos, std::move(note));
  seq_.insert(seq_.begin() + offset, seq);

  bool kept = true;
  while (notes_.size() > cap_) {
    // Evict the lowest-value note; among equal values the most recent one goes.
    std::size_t victim = 0;
    for (std::size_t i = 1; i < notes_.size(); ++i) {
      const auto& a = notes_[i];
      const auto& b = notes_[victim];
      if (a.source_value < b.source_value || (a.source_value == b.source_value && seq_[i] > seq_[victim])) {
        victim = i;
      }
    }
    if (seq_[victim] == seq) kept = false;
    notes_.erase(notes_.begin() + static_cast<std::ptrdiff_t>(victim));
    seq_.erase(seq_.begin() + static_cast<std::ptrdiff_t>(victim));
  }
  return kept;
}

std::string KeyframeMemory::render() const {
  std::string out;
  for (const auto& n : notes_) {
    out += fmt::format("[t={:.1f}s] {}\n", n.timestamp, n.text);
  }
  return out;
}

void SearchConfig::validate() const {
  auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (k < 0) throw ConfigError("k must be >= 0");
  if (n < 1) throw ConfigError("n must be >= 1");
  if (n_f < 1) throw ConfigError("n_f must be >= 1");
  if (!unit(c1) || !unit(c2)) throw ConfigError("c1 and c2 must lie in [0, 1]");
  if (c2 > c1) throw ConfigError(fmt::format("c2 ({}) must not exceed c1 ({})", c2, c1));
  if (w_conf < 0.0 || w_eval < 0.0) throw ConfigError("value weights must be non-negative");
  if (parallel_width < 1) throw ConfigError("parallel_width must be >= 1");
  if (min_interval_frames && *min_interval_frames < 1) throw ConfigError("min_interval_frames must be >= 1");
  if (!unit(dedup_iou) || !unit(visited_iou)) throw ConfigError("IoU thresholds must lie in [0, 1]");
  if (memory_cap < 1) throw ConfigError("memory_cap must be >= 1");
  if (utv_intervals < 1) throw ConfigError("utv_intervals must be >= 1");
}

}  // namespace tsearch
