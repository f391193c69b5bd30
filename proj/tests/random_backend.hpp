#pragma once

// Backend whose replies are a pure function of (seed, interval, memory size),
// for property tests over many random runs. Safe to call concurrently.

#include "tsearch/backend.hpp"
#include "tsearch/rng.hpp"

#include <atomic>
#include <string>

namespace randomized {

class HashBackend : public tsearch::Backend {
 public:
  explicit HashBackend(std::uint64_t seed, double error_rate = 0.0) : seed_(seed), error_rate_(error_rate) {}

  tsearch::BackendCapabilities capabilities() const override { return {}; }

  tsearch::ModelVerdict answer(const tsearch::VideoSource&, const tsearch::FrameSample& frames,
                               const tsearch::Query& query, const tsearch::KeyframeMemory& memory) override {
    answers_++;
    auto rng = rng_for(1, frames.interval, memory);
    maybe_fail(rng);
    tsearch::ModelVerdict v;
    const auto tokens = 1 + rng.below(4);
    for (std::uint64_t i = 0; i < tokens; ++i) v.token_logprobs.push_back(std::log(0.05 + 0.95 * rng.uniform()));
    v.confidence = tsearch::compute_confidence(v.token_logprobs);
    if (rng.below(10) != 0) {
      const auto& opt = query.options[rng.below(query.options.size())];
      v.answer_text = std::string(1, opt.label);
      v.parsed_choice = opt.label;
    } else {
      v.answer_text = "unclear";
    }
    return v;
  }

  double evaluate(const tsearch::VideoSource&, const tsearch::FrameSample& frames, const tsearch::Query&,
                  const tsearch::ModelVerdict&, const tsearch::KeyframeMemory& memory) override {
    evaluations_++;
    auto rng = rng_for(2, frames.interval, memory);
    maybe_fail(rng);
    return rng.uniform();
  }

  std::vector<tsearch::Interval> propose_intervals(const tsearch::VideoSource&, const tsearch::FrameSample& frames,
                                                   const tsearch::Query&, const tsearch::KeyframeMemory& memory,
                                                   const tsearch::Interval& parent, int n) override {
    auto rng = rng_for(3, frames.interval, memory);
    maybe_fail(rng);
    std::vector<tsearch::Interval> out;
    const auto count = rng.below(static_cast<std::uint64_t>(n) + 2);
    const auto len = static_cast<std::uint64_t>(parent.length());
    for (std::uint64_t i = 0; i < count && out.size() < static_cast<std::size_t>(n); ++i) {
      const auto a = parent.start + static_cast<tsearch::FrameIndex>(rng.below(len));
      const auto b = parent.start + static_cast<tsearch::FrameIndex>(rng.below(len + 1));
      if (a == b) continue;
      out.push_back({std::min(a, b), std::max(a, b)});
    }
    return out;
  }

  std::vector<tsearch::KeyframeNote> describe_keyframes(const tsearch::VideoSource& video,
                                                        const tsearch::FrameSample& frames, const tsearch::Query&,
                                                        const tsearch::KeyframeMemory& memory) override {
    auto rng = rng_for(4, frames.interval, memory);
    maybe_fail(rng);
    return tsearch::notes_from_reply("note " + std::to_string(rng.below(1000)), frames, video);
  }

  int answers() const { return answers_.load(); }
  int evaluations() const { return evaluations_.load(); }

 private:
  tsearch::SplitMix64 rng_for(std::uint64_t kind, const tsearch::Interval& iv,
                              const tsearch::KeyframeMemory& memory) const {
    return tsearch::SplitMix64(tsearch::mix_seed({seed_, kind, static_cast<std::uint64_t>(iv.start),
                                                  static_cast<std::uint64_t>(iv.end), memory.size()}));
  }
  void maybe_fail(tsearch::SplitMix64& rng) const {
    if (error_rate_ > 0.0 && rng.uniform() < error_rate_) throw tsearch::BackendError("injected failure", true);
  }

  std::uint64_t seed_;
  double error_rate_;
  std::atomic<int> answers_{0};
  std::atomic<int> evaluations_{0};
};

}  // namespace randomized
