#pragma once

// The video-language model seen by the search: four inference capabilities
// behind one interface, plus the reply interpretation shared by every
// implementation and a scripted stub for trace tests.

#include "tsearch/domain.hpp"
#include "tsearch/sampling.hpp"

#include <nlohmann/json_fwd.hpp>

#include <atomic>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace tsearch {

/// Inference failure. Transport-level failures are retriable; rejected
/// requests and malformed replies are not.
class BackendError : public Error {
 public:
  BackendError(const std::string& what, bool retriable) : Error(what), retriable_(retriable) {}
  bool retriable() const { return retriable_; }

 private:
  bool retriable_;
};

/// The server answered, but not in the shape the protocol promises.
class ProtocolError : public BackendError {
 public:
  explicit ProtocolError(const std::string& what) : BackendError(what, false) {}
};

struct BackendCapabilities {
  bool supports_logprobs = true;
  bool supports_yes_probability = true;
  int max_images = 64;
};

class Backend {
 public:
  virtual ~Backend() = default;

  virtual BackendCapabilities capabilities() const = 0;

  /// Answers the query from the sampled frames. self_eval is left empty.
  virtual ModelVerdict answer(const VideoSource& video, const FrameSample& frames, const Query& query,
                              const KeyframeMemory& memory) = 0;

  /// Probability of "yes" when asked whether `answer` is correct, in [0, 1].
  virtual double evaluate(const VideoSource& video, const FrameSample& frames, const Query& query,
                          const ModelVerdict& answer, const KeyframeMemory& memory) = 0;

  /// Sub-intervals of `parent` the model considers relevant, at most n.
  virtual std::vector<Interval> propose_intervals(const VideoSource& video, const FrameSample& frames,
                                                  const Query& query, const KeyframeMemory& memory,
                                                  const Interval& parent, int n) = 0;

  /// Textual notes about the sampled frames; empty when the model says nothing.
  virtual std::vector<KeyframeNote> describe_keyframes(const VideoSource& video, const FrameSample& frames,
                                                       const Query& query, const KeyframeMemory& memory) = 0;
};

// ----------------------------------------------------------------------------
// Reply interpretation
// ----------------------------------------------------------------------------

struct TokenLogprob {
  std::string token;
  double logprob = 0.0;
  std::vector<std::pair<std::string, double>> top_logprobs;
};

/// One generated reply with per-token log-probabilities.
struct Completion {
  std::string text;
  std::vector<TokenLogprob> tokens;
};

/// Builds a verdict: parsed choice from the text, confidence recomputed from
/// the token log-probabilities. Throws ProtocolError when `require_logprobs`
/// and none were returned.
ModelVerdict verdict_from_completion(const Completion& completion, const Query& query, bool require_logprobs);

struct YesProbability {
  double score = 0.5;
  bool fallback = false;  // neither yes nor no was among the candidates
};

/// p(yes) / (p(yes) + p(no)) over the candidates at the first generated
/// position. Tokens match case-insensitively after trimming whitespace and
/// punctuation; repeated spellings accumulate. Falls back to 0.5.
YesProbability yes_probability(const std::vector<std::pair<std::string, double>>& candidates);
YesProbability yes_probability(const Completion& completion);

/// One note per non-empty reply, stamped at the midpoint of the sampled interval.
std::vector<KeyframeNote> notes_from_reply(std::string_view reply, const FrameSample& frames,
                                           const VideoSource& video);

// ----------------------------------------------------------------------------
// Scripted stub
// ----------------------------------------------------------------------------

/// Backend driven by canned replies. Each capability looks up a reply keyed
/// by the interval it is called on (the sampled interval, or the parent for
/// proposals), then a FIFO queue, then a default. An entry with `error` set
/// throws BackendError instead of replying.
class ScriptedBackend : public Backend {
 public:
  struct AnswerReply {
    std::string text;
    std::vector<double> token_probs;
    std::optional<std::string> error;
  };
  struct EvalReply {
    std::vector<std::pair<std::string, double>> top_logprobs;
    std::optional<std::string> error;
  };
  struct TextReply {
    std::string text;
    std::optional<std::string> error;
  };

  struct Call {
    std::string capability;  // answer | evaluate | propose | describe
    Interval interval;
  };

  template <typename Reply>
  class Script {
   public:
    void on(const Interval& interval, Reply reply) { keyed_[interval] = std::move(reply); }
    void push(Reply reply) { queue_.push_back(std::move(reply)); }
    void set_default(Reply reply) { default_ = std::move(reply); }
    std::optional<Reply> next(const Interval& interval) {
      if (auto it = keyed_.find(interval); it != keyed_.end()) return it->second;
      if (!queue_.empty()) {
        Reply r = std::move(queue_.front());
        queue_.pop_front();
        return r;
      }
      return default_;
    }

   private:
    std::map<Interval, Reply> keyed_;
    std::deque<Reply> queue_;
    std::optional<Reply> default_;
  };

  Script<AnswerReply>& answers() { return answers_; }
  Script<EvalReply>& evaluations() { return evaluations_; }
  Script<TextReply>& proposals() { return proposals_; }
  Script<TextReply>& descriptions() { return descriptions_; }

  /// Convenience: eval reply whose yes-probability is exactly p.
  static EvalReply yes_with(double p);

  /// Loads a script from JSON: {"answers": [...], "evaluations": [...],
  /// "proposals": [...], "descriptions": [...]}. Entries carrying
  /// "interval": [s, e] are keyed, entries with "default": true become the
  /// default, the rest are queued in order. Answer entries hold "text" and
  /// "probs", evaluation entries "yes" (probability) or "top_logprobs"
  /// ({token: logprob}), text entries "text"; any entry may hold "error".
  static std::unique_ptr<ScriptedBackend> from_json(const nlohmann::json& script);

  BackendCapabilities capabilities() const override { return {}; }
  ModelVerdict answer(const VideoSource& video, const FrameSample& frames, const Query& query,
                      const KeyframeMemory& memory) override;
  double evaluate(const VideoSource& video, const FrameSample& frames, const Query& query,
                  const ModelVerdict& answer, const KeyframeMemory& memory) override;
  std::vector<Interval> propose_intervals(const VideoSource& video, const FrameSample& frames, const Query& query,
                                          const KeyframeMemory& memory, const Interval& parent, int n) override;
  std::vector<KeyframeNote> describe_keyframes(const VideoSource& video, const FrameSample& frames,
                                               const Query& query, const KeyframeMemory& memory) override;

  std::vector<Call> calls() const;
  std::size_t degraded_evaluations() const { return degraded_.load(); }

 private:
  void record(const char* capability, const Interval& interval);

  mutable std::mutex mu_;
  Script<AnswerReply> answers_;
  Script<EvalReply> evaluations_;
  Script<TextReply> proposals_;
  Script<TextReply> descriptions_;
  std::vector<Call> calls_;
  std::atomic<std::size_t> degraded_{0};
};

}  // namespace tsearch
