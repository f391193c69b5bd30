#include "tsearch/http_backend.hpp"

#include <fmt/format.h>
#include <httplib.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <thread>

namespace tsearch {

using nlohmann::json;

json build_chat_body(const ChatRequest& request, const std::string& model) {
  json content = json::array();
  for (const auto& f : request.frames) {
    content.push_back({{"type", "text"}, {"text", fmt::format("[t={:.1f}s]", f.timestamp)}});
    content.push_back({{"type", "image_url"}, {"image_url", {{"url", f.data_url()}}}});
  }
  content.push_back({{"type", "text"}, {"text", request.user_text}});

  json body = {{"model", model},
               {"messages", json::array({{{"role", "system"}, {"content", request.system_text}},
                                         {{"role", "user"}, {"content", std::move(content)}}})},
               {"max_tokens", request.max_tokens},
               {"temperature", request.temperature}};
  if (request.want_logprobs) {
    body["logprobs"] = true;
    body["top_logprobs"] = request.top_logprobs;
  }
  return body;
}

Completion parse_chat_response(const json& body) {
  try {
    const auto& choice = body.at("choices").at(0);
    Completion c;
    const auto& content = choice.at("message").at("content");
    c.text = content.is_null() ? std::string() : content.get<std::string>();
    if (choice.contains("logprobs") && choice["logprobs"].is_object() && choice["logprobs"].contains("content") &&
        choice["logprobs"]["content"].is_array()) {
      for (const auto& t : choice["logprobs"]["content"]) {
        TokenLogprob tok;
        tok.token = t.at("token").get<std::string>();
        tok.logprob = t.at("logprob").get<double>();
        if (t.contains("top_logprobs") && t["top_logprobs"].is_array()) {
          for (const auto& alt : t["top_logprobs"]) {
            tok.top_logprobs.emplace_back(alt.at("token").get<std::string>(), alt.at("logprob").get<double>());
          }
        }
        c.tokens.push_back(std::move(tok));
      }
    }
    return c;
  } catch (const json::exception& e) {
    throw ProtocolError(std::string("malformed chat-completions response: ") + e.what());
  }
}

namespace {

struct ParsedUrl {
  std::string host;  // scheme://host[:port]
  std::string path;  // without trailing slash
};

ParsedUrl split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("backend URL needs a scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  ParsedUrl out;
  out.host = url.substr(0, path_start);
  out.path = path_start == std::string::npos ? "" : url.substr(path_start);
  while (!out.path.empty() && out.path.back() == '/') out.path.pop_back();
  return out;
}

}  // namespace

HttpBackend::HttpBackend(HttpBackendConfig config, std::shared_ptr<FrameStore> frames, PromptSet prompts)
    : config_(std::move(config)), frames_(std::move(frames)), prompts_(std::move(prompts)) {
  if (!frames_) throw ConfigError("HttpBackend needs a frame store");
  if (config_.max_attempts < 1) throw ConfigError("max_attempts must be >= 1");
  auto url = split_url(config_.base_url);
  host_ = url.host;
  path_prefix_ = url.path;
  if (!config_.api_key_env.empty()) {
    if (const char* key = std::getenv(config_.api_key_env.c_str())) api_key_ = key;
  }
}

HttpBackend::~HttpBackend() = default;

BackendCapabilities HttpBackend::capabilities() const {
  return {config_.supports_logprobs, config_.supports_logprobs, config_.max_images};
}

std::unique_ptr<httplib::Client> HttpBackend::acquire_client() {
  {
    std::lock_guard lock(mu_);
    if (!pool_.empty()) {
      auto c = std::move(pool_.back());
      pool_.pop_back();
      return c;
    }
  }
  auto client = std::make_unique<httplib::Client>(host_);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(config_.timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(config_.timeout - secs);
  client->set_connection_timeout(secs.count(), usecs.count());
  client->set_read_timeout(secs.count(), usecs.count());
  client->set_write_timeout(secs.count(), usecs.count());
  client->set_keep_alive(true);
  if (!api_key_.empty()) client->set_bearer_token_auth(api_key_);
  return client;
}

void HttpBackend::release_client(std::unique_ptr<httplib::Client> client) {
  std::lock_guard lock(mu_);
  pool_.push_back(std::move(client));
}

Completion HttpBackend::complete(const ChatRequest& request) {
  const std::string body = build_chat_body(request, config_.model).dump();
  const std::string path = path_prefix_ + "/chat/completions";
  auto backoff = config_.initial_backoff;
  std::string last_error;
  for (int attempt = 1; attempt <= config_.max_attempts; ++attempt) {
    {
      std::lock_guard lock(mu_);
      ++attempts_;
    }
    auto client = acquire_client();
    auto res = client->Post(path, body, "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      // A failed connection is not reused.
    } else {
      release_client(std::move(client));
      if (res->status >= 200 && res->status < 300) {
        auto parsed = json::parse(res->body, nullptr, false);
        if (parsed.is_discarded()) throw ProtocolError("response body is not JSON");
        return parse_chat_response(parsed);
      }
      if (res->status < 500) {
        throw BackendError(fmt::format("request rejected with HTTP {}: {}", res->status, res->body.substr(0, 200)),
                           false);
      }
      last_error = fmt::format("server error HTTP {}", res->status);
    }
    if (attempt < config_.max_attempts) {
      spdlog::warn("chat request attempt {}/{} failed ({}); retrying in {} ms", attempt, config_.max_attempts,
                   last_error, backoff.count());
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
  }
  throw BackendError(fmt::format("giving up after {} attempts: {}", config_.max_attempts, last_error), true);
}

std::size_t HttpBackend::attempts_made() const {
  std::lock_guard lock(mu_);
  return attempts_;
}

std::size_t HttpBackend::degraded_evaluations() const {
  std::lock_guard lock(mu_);
  return degraded_;
}

ChatRequest HttpBackend::make_request(const VideoSource& video, const FrameSample& frames, PromptKind kind,
                                      const PromptContext& context, int max_tokens) {
  if (static_cast<int>(frames.indices.size()) > config_.max_images) {
    throw ConfigError(fmt::format("{} frames requested but the backend accepts at most {}", frames.indices.size(),
                                  config_.max_images));
  }
  ChatRequest r;
  try {
    r.frames = frames_->resolve(video, frames.indices);
  } catch (const FrameError& e) {
    throw BackendError(e.what(), true);
  }
  r.system_text = config_.system_text;
  r.user_text = prompts_.render(kind, context);
  r.max_tokens = max_tokens;
  r.want_logprobs = config_.supports_logprobs;
  r.top_logprobs = config_.top_logprobs;
  r.temperature = 0.0;
  return r;
}

namespace {

PromptContext context_for(const VideoSource& video, const Interval& interval, const Query& query,
                          const KeyframeMemory* memory) {
  PromptContext ctx;
  ctx.question = query.question;
  ctx.options = query.options;
  ctx.interval_start_s = video.timestamp(interval.start);
  ctx.interval_end_s = video.timestamp(interval.end);
  ctx.video_duration_s = video.duration_seconds();
  ctx.memory = memory;
  return ctx;
}

}  // namespace

ModelVerdict HttpBackend::answer(const VideoSource& video, const FrameSample& frames, const Query& query,
                                 const KeyframeMemory& memory) {
  auto ctx = context_for(video, frames.interval, query, &memory);
  auto completion = complete(make_request(video, frames, PromptKind::answer, ctx, config_.answer_max_tokens));
  return verdict_from_completion(completion, query, config_.supports_logprobs);
}

double HttpBackend::evaluate(const VideoSource& video, const FrameSample& frames, const Query& query,
                             const ModelVerdict& answer, const KeyframeMemory& memory) {
  auto ctx = context_for(video, frames.interval, query, &memory);
  ctx.prior_answer = answer.answer_text;
  auto completion = complete(make_request(video, frames, PromptKind::evaluate, ctx, config_.evaluate_max_tokens));
  const auto yes = yes_probability(completion);
  if (yes.fallback) {
    {
      std::lock_guard lock(mu_);
      ++degraded_;
    }
    spdlog::warn("evaluation of {} returned neither yes nor no; scoring 0.5", frames.interval.to_string());
  }
  return yes.score;
}

std::vector<Interval> HttpBackend::propose_intervals(const VideoSource& video, const FrameSample& frames,
                                                     const Query& query, const KeyframeMemory& memory,
                                                     const Interval& parent, int n) {
  auto ctx = context_for(video, parent, query, &memory);
  ctx.n = n;
  auto completion = complete(make_request(video, frames, PromptKind::expand, ctx, config_.propose_max_tokens));
  auto out = parse_intervals(completion.text, video.fps, parent);
  if (out.size() > static_cast<std::size_t>(n)) out.resize(static_cast<std::size_t>(n));
  return out;
}

std::vector<KeyframeNote> HttpBackend::describe_keyframes(const VideoSource& video, const FrameSample& frames,
                                                          const Query& query, const KeyframeMemory& memory) {
  auto ctx = context_for(video, frames.interval, query, &memory);
  auto completion = complete(make_request(video, frames, PromptKind::keyinfo, ctx, config_.describe_max_tokens));
  return notes_from_reply(completion.text, frames, video);
}

}  // namespace tsearch
