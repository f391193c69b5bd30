#pragma once

// Simulated video-language model over synthetic videos with one planted
// answer-bearing interval. Confidence grows with how much of the sampled
// evidence falls inside the target and with how finely the interval is
// zoomed, so search behaviour can be checked without real models.

#include "tsearch/backend.hpp"
#include "tsearch/domain.hpp"
#include "tsearch/sampling.hpp"

#include <nlohmann/json.hpp>

#include <atomic>
#include <string>
#include <vector>

namespace tsearch {

struct SyntheticWorld {
  std::string video_id = "synthetic";
  FrameIndex total_frames = 3600;
  Rational fps{1, 1};
  Interval target{1800, 1830};
  std::string fact = "a person in a red long-sleeve shirt opens the door";
  std::string question = "What happens at the key moment of the video?";
  std::vector<QueryOption> options;
  char correct_choice = 'A';
  FrameIndex resolution_frames = 90;  // longest interval at which one in-target frame suffices
  double conf_floor = 0.3;
  double conf_ceil = 0.95;
  double noise_sigma = 0.15;
  double p_hint = 0.5;           // chance a proposal is steered at the target
  double jitter_fraction = 0.5;  // max padding around the target, as a fraction of its length
  std::uint64_t seed = 0;

  VideoSource video() const { return {video_id, total_frames, fps}; }
  Query query() const { return {question, options, correct_choice}; }
  /// Throws DomainError on inconsistent fields.
  void validate() const;
};

nlohmann::json world_to_json(const SyntheticWorld& world);
SyntheticWorld world_from_json(const nlohmann::json& j);

/// Share of sampled frames inside the target.
double oracle_coverage(const SyntheticWorld& world, const FrameSample& frames);
/// coverage * min(1, resolution_frames / interval length).
double oracle_signal(const SyntheticWorld& world, const FrameSample& frames);

/// Confidence floor + (ceil - floor) * signal + seeded noise, clamped. The
/// choice is correct when that noisy evidence clears the midpoint between
/// floor and ceil (with zero noise: signal > 0.5); otherwise a seeded wrong
/// option. Token log-probabilities are four equal entries reproducing the
/// confidence exactly.
ModelVerdict oracle_answer(const SyntheticWorld& world, const FrameSample& frames, const Query& query);

/// Yes-probability equal to the answer confidence.
double oracle_evaluate(const SyntheticWorld& world, const FrameSample& frames);

/// One proposal: with probability p_hint (when parent overlaps the target)
/// the target padded by up to jitter_fraction of its length on each side,
/// otherwise a seeded random sub-interval of parent.
std::vector<Interval> oracle_propose(const SyntheticWorld& world, const Interval& parent, int n);

/// The fact when coverage > 0.5, a neutral description otherwise.
std::string oracle_describe(const SyntheticWorld& world, const FrameSample& frames);

class OracleBackend : public Backend {
 public:
  explicit OracleBackend(SyntheticWorld world) : world_(std::move(world)) { world_.validate(); }

  const SyntheticWorld& world() const { return world_; }

  BackendCapabilities capabilities() const override { return {true, true, 1 << 20}; }
  ModelVerdict answer(const VideoSource& video, const FrameSample& frames, const Query& query,
                      const KeyframeMemory& memory) override;
  double evaluate(const VideoSource& video, const FrameSample& frames, const Query& query,
                  const ModelVerdict& answer, const KeyframeMemory& memory) override;
  std::vector<Interval> propose_intervals(const VideoSource& video, const FrameSample& frames, const Query& query,
                                          const KeyframeMemory& memory, const Interval& parent, int n) override;
  std::vector<KeyframeNote> describe_keyframes(const VideoSource& video, const FrameSample& frames,
                                               const Query& query, const KeyframeMemory& memory) override;

  std::size_t calls() const { return calls_.load(); }

 private:
  SyntheticWorld world_;
  std::atomic<std::size_t> calls_{0};
};

// ----------------------------------------------------------------------------
// Corpus generation
// ----------------------------------------------------------------------------

enum class DurationGroup { short_, medium, long_ };
const char* to_string(DurationGroup group);
DurationGroup parse_duration_group(const std::string& name);

struct CorpusGroupSpec {
  DurationGroup group = DurationGroup::long_;
  int count = 0;
  double min_duration_s = 1800.0;
  double max_duration_s = 3600.0;
};

struct CorpusSpec {
  std::uint64_t seed = 7;
  Rational fps{1, 1};
  std::vector<CorpusGroupSpec> groups;
  double min_target_fraction = 0.005;
  double max_target_fraction = 0.02;
  double resolution_multiple = 3.0;  // resolution_frames = multiple * target length
  int num_options = 4;
  double conf_floor = 0.3;
  double conf_ceil = 0.95;
  double noise_sigma = 0.15;
  double p_hint = 0.5;
  double jitter_fraction = 0.5;

  /// Default duration range for a group.
  static CorpusGroupSpec group_defaults(DurationGroup group, int count);
  /// 200 long videos, targets 0.5-2% of the duration.
  static CorpusSpec canonical();
  void validate() const;
};

CorpusSpec corpus_spec_from_json(const nlohmann::json& j);
nlohmann::json corpus_spec_to_json(const CorpusSpec& spec);

struct CorpusItem {
  SyntheticWorld world;
  DurationGroup group = DurationGroup::long_;
};

/// Deterministic in the spec (including its seed).
std::vector<CorpusItem> generate_corpus(const CorpusSpec& spec);

}  // namespace tsearch
