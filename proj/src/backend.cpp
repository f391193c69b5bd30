#include "tsearch/backend.hpp"

#include "tsearch/prompts.hpp"

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include <cctype>
#include <cmath>

namespace tsearch {

ModelVerdict verdict_from_completion(const Completion& completion, const Query& query, bool require_logprobs) {
  ModelVerdict v;
  v.answer_text = completion.text;
  v.parsed_choice = parse_choice(completion.text, query.options);
  for (const auto& t : completion.tokens) v.token_logprobs.push_back(std::min(t.logprob, 0.0));
  if (v.token_logprobs.empty()) {
    if (require_logprobs) throw ProtocolError("reply carries no token log-probabilities");
    v.confidence = 0.0;
  } else {
    v.confidence = compute_confidence(v.token_logprobs);
  }
  return v;
}

namespace {

std::string normalize_token(std::string_view t) {
  std::string out;
  for (unsigned char c : t) {
    if (std::isalpha(c)) out += static_cast<char>(std::tolower(c));
  }
  return out;
}

}  // namespace

YesProbability yes_probability(const std::vector<std::pair<std::string, double>>& candidates) {
  double yes = 0.0, no = 0.0;
  for (const auto& [token, logprob] : candidates) {
    const auto norm = normalize_token(token);
    if (norm == "yes") yes += std::exp(logprob);
    else if (norm == "no") no += std::exp(logprob);
  }
  if (yes + no <= 0.0) return {0.5, true};
  return {yes / (yes + no), false};
}

YesProbability yes_probability(const Completion& completion) {
  if (completion.tokens.empty()) return {0.5, true};
  const auto& first = completion.tokens.front();
  auto candidates = first.top_logprobs;
  const bool listed = std::any_of(candidates.begin(), candidates.end(),
                                  [&](const auto& c) { return c.first == first.token; });
  if (!listed) candidates.emplace_back(first.token, first.logprob);
  return yes_probability(candidates);
}

std::vector<KeyframeNote> notes_from_reply(std::string_view reply, const FrameSample& frames,
                                           const VideoSource& video) {
  while (!reply.empty() && std::isspace(static_cast<unsigned char>(reply.front()))) reply.remove_prefix(1);
  while (!reply.empty() && std::isspace(static_cast<unsigned char>(reply.back()))) reply.remove_suffix(1);
  if (reply.empty()) return {};
  KeyframeNote note;
  note.source_interval = frames.interval;
  note.timestamp = 0.5 * (video.timestamp(frames.interval.start) + video.timestamp(frames.interval.end));
  note.text = std::string(reply);
  return {note};
}

// ----------------------------------------------------------------------------
// ScriptedBackend
// ----------------------------------------------------------------------------

ScriptedBackend::EvalReply ScriptedBackend::yes_with(double p) {
  EvalReply r;
  if (p > 0.0) r.top_logprobs.emplace_back("yes", std::log(p));
  if (p < 1.0) r.top_logprobs.emplace_back("no", std::log(1.0 - p));
  return r;
}

void ScriptedBackend::record(const char* capability, const Interval& interval) {
  calls_.push_back({capability, interval});
}

std::vector<ScriptedBackend::Call> ScriptedBackend::calls() const {
  std::lock_guard lock(mu_);
  return calls_;
}

namespace {

template <typename Reply>
Reply require(std::optional<Reply> reply, const char* capability, const Interval& interval) {
  if (!reply) {
    throw BackendError(std::string("script has no ") + capability + " reply for " + interval.to_string(), false);
  }
  if (reply->error) throw BackendError(*reply->error, true);
  return std::move(*reply);
}

}  // namespace

ModelVerdict ScriptedBackend::answer(const VideoSource&, const FrameSample& frames, const Query& query,
                                     const KeyframeMemory&) {
  AnswerReply reply;
  {
    std::lock_guard lock(mu_);
    record("answer", frames.interval);
    reply = require(answers_.next(frames.interval), "answer", frames.interval);
  }
  Completion c{reply.text, {}};
  for (double p : reply.token_probs) c.tokens.push_back({"", std::log(p), {}});
  return verdict_from_completion(c, query, true);
}

double ScriptedBackend::evaluate(const VideoSource&, const FrameSample& frames, const Query&, const ModelVerdict&,
                                 const KeyframeMemory&) {
  EvalReply reply;
  {
    std::lock_guard lock(mu_);
    record("evaluate", frames.interval);
    reply = require(evaluations_.next(frames.interval), "evaluate", frames.interval);
  }
  const auto yes = yes_probability(reply.top_logprobs);
  if (yes.fallback) {
    ++degraded_;
    spdlog::warn("evaluation reply for {} has neither yes nor no; using 0.5", frames.interval.to_string());
  }
  return yes.score;
}

std::vector<Interval> ScriptedBackend::propose_intervals(const VideoSource& video, const FrameSample&,
                                                         const Query&, const KeyframeMemory&,
                                                         const Interval& parent, int n) {
  TextReply reply;
  {
    std::lock_guard lock(mu_);
    record("propose", parent);
    reply = require(proposals_.next(parent), "propose", parent);
  }
  auto out = parse_intervals(reply.text, video.fps, parent);
  if (out.size() > static_cast<std::size_t>(n)) out.resize(static_cast<std::size_t>(n));
  return out;
}

std::vector<KeyframeNote> ScriptedBackend::describe_keyframes(const VideoSource& video, const FrameSample& frames,
                                                              const Query&, const KeyframeMemory&) {
  TextReply reply;
  {
    std::lock_guard lock(mu_);
    record("describe", frames.interval);
    reply = require(descriptions_.next(frames.interval), "describe", frames.interval);
  }
  return notes_from_reply(reply.text, frames, video);
}

std::unique_ptr<ScriptedBackend> ScriptedBackend::from_json(const nlohmann::json& script) {
  auto backend = std::make_unique<ScriptedBackend>();
  auto interval_of = [](const nlohmann::json& e) {
    const auto& iv = e.at("interval");
    return Interval{iv.at(0).get<FrameIndex>(), iv.at(1).get<FrameIndex>()};
  };
  auto error_of = [](const nlohmann::json& e) -> std::optional<std::string> {
    if (e.contains("error")) return e["error"].get<std::string>();
    return std::nullopt;
  };
  auto place = [&](auto& target, const nlohmann::json& e, auto reply) {
    if (e.contains("interval")) target.on(interval_of(e), std::move(reply));
    else if (e.value("default", false)) target.set_default(std::move(reply));
    else target.push(std::move(reply));
  };
  try {
    for (const auto& e : script.value("answers", nlohmann::json::array())) {
      AnswerReply r{e.value("text", ""), e.value("probs", std::vector<double>{}), error_of(e)};
      place(backend->answers_, e, std::move(r));
    }
    for (const auto& e : script.value("evaluations", nlohmann::json::array())) {
      EvalReply r;
      if (e.contains("yes")) r = yes_with(e["yes"].get<double>());
      if (e.contains("top_logprobs")) {
        for (const auto& [token, lp] : e["top_logprobs"].items()) r.top_logprobs.emplace_back(token, lp.get<double>());
      }
      r.error = error_of(e);
      place(backend->evaluations_, e, std::move(r));
    }
    for (const auto& e : script.value("proposals", nlohmann::json::array())) {
      place(backend->proposals_, e, TextReply{e.value("text", ""), error_of(e)});
    }
    for (const auto& e : script.value("descriptions", nlohmann::json::array())) {
      place(backend->descriptions_, e, TextReply{e.value("text", ""), error_of(e)});
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad stub script: ") + e.what());
  }
  return backend;
}

}  // namespace tsearch
