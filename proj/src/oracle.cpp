#include "tsearch/oracle.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <array>
#include <cmath>

namespace tsearch {

using nlohmann::json;

namespace {

// Lowest confidence the oracle reports, so token log-probabilities stay finite.
constexpr double kMinConfidence = 1e-3;

std::uint64_t frames_seed(const SyntheticWorld& world, const FrameSample& frames) {
  std::uint64_t h = mix_seed({world.seed, static_cast<std::uint64_t>(frames.indices.size())});
  for (FrameIndex i : frames.indices) h = mix_seed({h, static_cast<std::uint64_t>(i)});
  return h;
}

}  // namespace

void SyntheticWorld::validate() const {
  video().validate();
  if (!target.valid_within(total_frames)) {
    throw DomainError("target " + target.to_string() + " lies outside the video");
  }
  if (!(conf_floor < conf_ceil) || conf_floor < 0.0 || conf_ceil > 1.0) {
    throw DomainError("need 0 <= conf_floor < conf_ceil <= 1");
  }
  if (noise_sigma < 0.0) throw DomainError("noise_sigma must be >= 0");
  if (p_hint < 0.0 || p_hint > 1.0) throw DomainError("p_hint must lie in [0, 1]");
  if (resolution_frames < 1) throw DomainError("resolution_frames must be >= 1");
  if (options.empty()) throw DomainError("synthetic world needs options");
  query().validate();
}

json world_to_json(const SyntheticWorld& w) {
  json opts = json::array();
  for (const auto& o : w.options) opts.push_back({{"label", std::string(1, o.label)}, {"text", o.text}});
  return {{"video_id", w.video_id},
          {"total_frames", w.total_frames},
          {"fps", w.fps.to_string()},
          {"target", {w.target.start, w.target.end}},
          {"fact", w.fact},
          {"question", w.question},
          {"options", opts},
          {"correct_choice", std::string(1, w.correct_choice)},
          {"resolution_frames", w.resolution_frames},
          {"conf_floor", w.conf_floor},
          {"conf_ceil", w.conf_ceil},
          {"noise_sigma", w.noise_sigma},
          {"p_hint", w.p_hint},
          {"jitter_fraction", w.jitter_fraction},
          {"seed", w.seed}};
}

SyntheticWorld world_from_json(const json& j) {
  SyntheticWorld w;
  try {
    w.video_id = j.value("video_id", w.video_id);
    w.total_frames = j.at("total_frames").get<FrameIndex>();
    if (j.contains("fps")) {
      const auto& f = j["fps"];
      w.fps = Rational::parse(f.is_string() ? f.get<std::string>() : f.dump());
    }
    w.target = {j.at("target").at(0).get<FrameIndex>(), j.at("target").at(1).get<FrameIndex>()};
    w.fact = j.value("fact", w.fact);
    w.question = j.value("question", w.question);
    w.options.clear();
    for (const auto& o : j.at("options")) {
      w.options.push_back({o.at("label").get<std::string>().at(0), o.at("text").get<std::string>()});
    }
    w.correct_choice = j.at("correct_choice").get<std::string>().at(0);
    w.resolution_frames = j.value("resolution_frames", w.resolution_frames);
    w.conf_floor = j.value("conf_floor", w.conf_floor);
    w.conf_ceil = j.value("conf_ceil", w.conf_ceil);
    w.noise_sigma = j.value("noise_sigma", w.noise_sigma);
    w.p_hint = j.value("p_hint", w.p_hint);
    w.jitter_fraction = j.value("jitter_fraction", w.jitter_fraction);
    w.seed = j.value("seed", w.seed);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad synthetic world: ") + e.what());
  }
  w.validate();
  return w;
}

double oracle_coverage(const SyntheticWorld& world, const FrameSample& frames) {
  if (frames.indices.empty()) return 0.0;
  const auto inside = std::count_if(frames.indices.begin(), frames.indices.end(),
                                    [&](FrameIndex i) { return world.target.contains(i); });
  return static_cast<double>(inside) / static_cast<double>(frames.indices.size());
}

double oracle_signal(const SyntheticWorld& world, const FrameSample& frames) {
  const double zoom = std::min(1.0, static_cast<double>(world.resolution_frames) /
                                        static_cast<double>(frames.interval.length()));
  return oracle_coverage(world, frames) * zoom;
}

ModelVerdict oracle_answer(const SyntheticWorld& world, const FrameSample& frames, const Query& query) {
  const double signal = oracle_signal(world, frames);
  const std::uint64_t seed = frames_seed(world, frames);
  SplitMix64 rng(seed);
  const double noise = world.noise_sigma > 0.0 ? world.noise_sigma * rng.gaussian() : 0.0;
  const double evidence = world.conf_floor + (world.conf_ceil - world.conf_floor) * signal + noise;
  const double confidence = std::clamp(evidence, kMinConfidence, 1.0);
  const bool correct = evidence > 0.5 * (world.conf_floor + world.conf_ceil);

  char choice = world.correct_choice;
  if (!correct) {
    std::vector<char> wrong;
    for (const auto& o : world.options) {
      if (o.label != world.correct_choice) wrong.push_back(o.label);
    }
    SplitMix64 pick(mix_seed({seed, 0x77726f6e67ULL}));
    choice = wrong[pick.below(wrong.size())];
  }

  Completion c;
  c.text = std::string(1, choice);
  const double lp = std::log(confidence);
  for (int t = 0; t < 4; ++t) c.tokens.push_back({"", lp, {}});
  return verdict_from_completion(c, query, true);
}

double oracle_evaluate(const SyntheticWorld& world, const FrameSample& frames) {
  return oracle_answer(world, frames, world.query()).confidence;
}

std::vector<Interval> oracle_propose(const SyntheticWorld& world, const Interval& parent, int n) {
  if (n < 1 || parent.length() < 1) return {};
  SplitMix64 rng(mix_seed({world.seed, 0x70726f70ULL, static_cast<std::uint64_t>(parent.start),
                           static_cast<std::uint64_t>(parent.end)}));
  const bool hint = rng.uniform() < world.p_hint;
  if (hint && overlap_frames(parent, world.target) > 0) {
    const double pad = world.jitter_fraction * static_cast<double>(world.target.length());
    const auto before = static_cast<FrameIndex>(std::floor(rng.uniform() * pad));
    const auto after = static_cast<FrameIndex>(std::floor(rng.uniform() * pad));
    if (auto c = clamp_interval({world.target.start - before, world.target.end + after}, parent)) return {*c};
  }
  const FrameIndex len = parent.length();
  const FrameIndex lo = std::max<FrameIndex>(1, len / 8);
  const FrameIndex hi = std::max<FrameIndex>(lo, len / 2);
  const FrameIndex size = lo + static_cast<FrameIndex>(rng.below(static_cast<std::uint64_t>(hi - lo + 1)));
  const FrameIndex start = parent.start + static_cast<FrameIndex>(rng.below(static_cast<std::uint64_t>(len - size + 1)));
  return {Interval{start, start + size}};
}

std::string oracle_describe(const SyntheticWorld& world, const FrameSample& frames) {
  if (oracle_coverage(world, frames) > 0.5) return world.fact;
  const auto video = world.video();
  return fmt::format("Frames between {:.1f}s and {:.1f}s show nothing related to the question.",
                     video.timestamp(frames.interval.start), video.timestamp(frames.interval.end));
}

ModelVerdict OracleBackend::answer(const VideoSource&, const FrameSample& frames, const Query& query,
                                   const KeyframeMemory&) {
  ++calls_;
  return oracle_answer(world_, frames, query);
}

double OracleBackend::evaluate(const VideoSource&, const FrameSample& frames, const Query&, const ModelVerdict&,
                               const KeyframeMemory&) {
  ++calls_;
  return oracle_evaluate(world_, frames);
}

std::vector<Interval> OracleBackend::propose_intervals(const VideoSource&, const FrameSample&, const Query&,
                                                       const KeyframeMemory&, const Interval& parent, int n) {
  ++calls_;
  return oracle_propose(world_, parent, n);
}

std::vector<KeyframeNote> OracleBackend::describe_keyframes(const VideoSource&, const FrameSample& frames,
                                                            const Query&, const KeyframeMemory&) {
  ++calls_;
  return notes_from_reply(oracle_describe(world_, frames), frames, world_.video());
}

// ----------------------------------------------------------------------------
// Corpus
// ----------------------------------------------------------------------------

const char* to_string(DurationGroup group) {
  switch (group) {
    case DurationGroup::short_: return "short";
    case DurationGroup::medium: return "medium";
    case DurationGroup::long_: return "long";
  }
  return "?";
}

DurationGroup parse_duration_group(const std::string& name) {
  if (name == "short") return DurationGroup::short_;
  if (name == "medium") return DurationGroup::medium;
  if (name == "long") return DurationGroup::long_;
  throw ConfigError("unknown duration group '" + name + "'");
}

CorpusGroupSpec CorpusSpec::group_defaults(DurationGroup group, int count) {
  switch (group) {
    case DurationGroup::short_: return {group, count, 60.0, 120.0};
    case DurationGroup::medium: return {group, count, 240.0, 900.0};
    case DurationGroup::long_: return {group, count, 1800.0, 3600.0};
  }
  return {group, count, 1800.0, 3600.0};
}

CorpusSpec CorpusSpec::canonical() {
  CorpusSpec spec;
  spec.seed = 2025;
  spec.groups = {group_defaults(DurationGroup::long_, 200)};
  return spec;
}

void CorpusSpec::validate() const {
  if (groups.empty()) throw ConfigError("corpus spec has no groups");
  for (const auto& g : groups) {
    if (g.count < 0) throw ConfigError("group count must be >= 0");
    if (!(g.min_duration_s > 0.0) || g.max_duration_s < g.min_duration_s) {
      throw ConfigError("bad duration range for group " + std::string(to_string(g.group)));
    }
  }
  if (!(min_target_fraction > 0.0) || max_target_fraction < min_target_fraction || max_target_fraction > 1.0) {
    throw ConfigError("bad target fraction range");
  }
  if (num_options < 2 || num_options > 8) throw ConfigError("num_options must lie in [2, 8]");
  if (!(resolution_multiple > 0.0)) throw ConfigError("resolution_multiple must be positive");
}

CorpusSpec corpus_spec_from_json(const json& j) {
  CorpusSpec s;
  try {
    s.seed = j.value("seed", s.seed);
    if (j.contains("fps")) {
      const auto& f = j["fps"];
      s.fps = Rational::parse(f.is_string() ? f.get<std::string>() : f.dump());
    }
    for (const auto& g : j.at("groups")) {
      auto group = CorpusSpec::group_defaults(parse_duration_group(g.at("name").get<std::string>()),
                                              g.at("count").get<int>());
      group.min_duration_s = g.value("min_duration_s", group.min_duration_s);
      group.max_duration_s = g.value("max_duration_s", group.max_duration_s);
      s.groups.push_back(group);
    }
    if (j.contains("target_fraction")) {
      s.min_target_fraction = j["target_fraction"].at(0).get<double>();
      s.max_target_fraction = j["target_fraction"].at(1).get<double>();
    }
    s.resolution_multiple = j.value("resolution_multiple", s.resolution_multiple);
    s.num_options = j.value("num_options", s.num_options);
    s.conf_floor = j.value("conf_floor", s.conf_floor);
    s.conf_ceil = j.value("conf_ceil", s.conf_ceil);
    s.noise_sigma = j.value("noise_sigma", s.noise_sigma);
    s.p_hint = j.value("p_hint", s.p_hint);
    s.jitter_fraction = j.value("jitter_fraction", s.jitter_fraction);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad corpus spec: ") + e.what());
  }
  s.validate();
  return s;
}

json corpus_spec_to_json(const CorpusSpec& s) {
  json groups = json::array();
  for (const auto& g : s.groups) {
    groups.push_back({{"name", to_string(g.group)},
                      {"count", g.count},
                      {"min_duration_s", g.min_duration_s},
                      {"max_duration_s", g.max_duration_s}});
  }
  return {{"seed", s.seed},
          {"fps", s.fps.to_string()},
          {"groups", groups},
          {"target_fraction", {s.min_target_fraction, s.max_target_fraction}},
          {"resolution_multiple", s.resolution_multiple},
          {"num_options", s.num_options},
          {"conf_floor", s.conf_floor},
          {"conf_ceil", s.conf_ceil},
          {"noise_sigma", s.noise_sigma},
          {"p_hint", s.p_hint},
          {"jitter_fraction", s.jitter_fraction}};
}

namespace {

constexpr std::array<std::string_view, 8> kActors = {"a man in a red jacket", "a woman with a blue umbrella",
                                                    "a child on a bicycle", "a chef in a white apron",
                                                    "a dog with a green collar", "a cyclist in a yellow helmet",
                                                    "an old man with a cane", "a girl holding a kite"};
constexpr std::array<std::string_view, 8> kActions = {"opens the front door", "drops a glass bottle",
                                                     "waves at the camera", "picks up a letter",
                                                     "turns off the lights", "climbs the stairs",
                                                     "writes on the whiteboard", "feeds the cat"};

}  // namespace

std::vector<CorpusItem> generate_corpus(const CorpusSpec& spec) {
  spec.validate();
  std::vector<CorpusItem> out;
  SplitMix64 rng(mix_seed({spec.seed, 0x636f72707573ULL}));
  int serial = 0;
  for (const auto& g : spec.groups) {
    for (int i = 0; i < g.count; ++i, ++serial) {
      SyntheticWorld w;
      w.video_id = fmt::format("{}_{:04d}", to_string(g.group), serial);
      w.fps = spec.fps;
      const double duration = g.min_duration_s + rng.uniform() * (g.max_duration_s - g.min_duration_s);
      w.total_frames = std::max<FrameIndex>(1, static_cast<FrameIndex>(std::llround(duration * spec.fps.to_double())));
      const double fraction =
          spec.min_target_fraction + rng.uniform() * (spec.max_target_fraction - spec.min_target_fraction);
      const FrameIndex target_len =
          std::clamp<FrameIndex>(static_cast<FrameIndex>(std::llround(fraction * static_cast<double>(w.total_frames))),
                                 1, w.total_frames);
      const FrameIndex start =
          static_cast<FrameIndex>(rng.below(static_cast<std::uint64_t>(w.total_frames - target_len + 1)));
      w.target = {start, start + target_len};
      w.resolution_frames = std::max<FrameIndex>(
          1, static_cast<FrameIndex>(std::llround(spec.resolution_multiple * static_cast<double>(target_len))));

      // Distinct actor/action pairs per option; the correct one is the fact.
      const auto actor = rng.below(kActors.size());
      std::vector<std::size_t> actions(kActions.size());
      for (std::size_t a = 0; a < actions.size(); ++a) actions[a] = a;
      for (std::size_t a = actions.size() - 1; a > 0; --a) std::swap(actions[a], actions[rng.below(a + 1)]);
      w.question = fmt::format("What does {} do in this video?", kActors[actor]);
      for (int o = 0; o < spec.num_options; ++o) {
        w.options.push_back({static_cast<char>('A' + o), std::string(kActions[actions[static_cast<std::size_t>(o)]])});
      }
      w.correct_choice = static_cast<char>('A' + rng.below(static_cast<std::uint64_t>(spec.num_options)));
      w.fact = fmt::format("{} {}", kActors[actor], w.options[static_cast<std::size_t>(w.correct_choice - 'A')].text);

      w.conf_floor = spec.conf_floor;
      w.conf_ceil = spec.conf_ceil;
      w.noise_sigma = spec.noise_sigma;
      w.p_hint = spec.p_hint;
      w.jitter_fraction = spec.jitter_fraction;
      w.seed = rng.next();
      w.validate();
      out.push_back({std::move(w), g.group});
    }
  }
  return out;
}

}  // namespace tsearch
