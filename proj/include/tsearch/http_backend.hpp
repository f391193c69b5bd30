#pragma once

// Backend speaking the OpenAI-compatible chat-completions protocol with
// image parts and token log-probabilities.

#include "tsearch/backend.hpp"
#include "tsearch/frames.hpp"
#include "tsearch/prompts.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

namespace httplib {
class Client;
}

namespace tsearch {

struct HttpBackendConfig {
  std::string base_url = "http://localhost:8000/v1";  // POSTs go to <base_url>/chat/completions
  std::string model = "default";
  std::string api_key_env = "OPENAI_API_KEY";
  std::chrono::milliseconds timeout{120'000};
  int max_attempts = 3;
  std::chrono::milliseconds initial_backoff{500};  // doubles per retry
  int top_logprobs = 5;
  bool supports_logprobs = true;
  int max_images = 32;
  int answer_max_tokens = 64;
  int evaluate_max_tokens = 4;
  int propose_max_tokens = 256;
  int describe_max_tokens = 256;
  std::string system_text =
      "You are a careful video understanding assistant. You see frames sampled from a long video, "
      "each preceded by its timestamp.";
};

struct ChatRequest {
  std::vector<EncodedFrame> frames;
  std::string system_text;
  std::string user_text;
  int max_tokens = 64;
  bool want_logprobs = true;
  int top_logprobs = 5;
  double temperature = 0.0;
};

/// Request body: system message, then a user message with one text part
/// and one image part per frame, then the prompt text.
nlohmann::json build_chat_body(const ChatRequest& request, const std::string& model);

/// Reads choices[0].message.content and choices[0].logprobs.content. A
/// missing top_logprobs list is tolerated. Throws ProtocolError on shape errors.
Completion parse_chat_response(const nlohmann::json& body);

class HttpBackend : public Backend {
 public:
  HttpBackend(HttpBackendConfig config, std::shared_ptr<FrameStore> frames,
              PromptSet prompts = PromptSet::defaults());
  ~HttpBackend() override;

  BackendCapabilities capabilities() const override;
  ModelVerdict answer(const VideoSource& video, const FrameSample& frames, const Query& query,
                      const KeyframeMemory& memory) override;
  double evaluate(const VideoSource& video, const FrameSample& frames, const Query& query,
                  const ModelVerdict& answer, const KeyframeMemory& memory) override;
  std::vector<Interval> propose_intervals(const VideoSource& video, const FrameSample& frames, const Query& query,
                                          const KeyframeMemory& memory, const Interval& parent, int n) override;
  std::vector<KeyframeNote> describe_keyframes(const VideoSource& video, const FrameSample& frames,
                                               const Query& query, const KeyframeMemory& memory) override;

  /// Sends one request with the retry policy: transport failures and 5xx
  /// responses are retried up to max_attempts with exponential backoff,
  /// 4xx responses are surfaced at once.
  Completion complete(const ChatRequest& request);

  std::size_t attempts_made() const;
  std::size_t degraded_evaluations() const;

 private:
  std::unique_ptr<httplib::Client> acquire_client();
  void release_client(std::unique_ptr<httplib::Client> client);
  ChatRequest make_request(const VideoSource& video, const FrameSample& frames, PromptKind kind,
                           const PromptContext& context, int max_tokens);

  HttpBackendConfig config_;
  std::shared_ptr<FrameStore> frames_;
  PromptSet prompts_;
  std::string host_;
  std::string path_prefix_;
  std::string api_key_;

  mutable std::mutex mu_;
  std::vector<std::unique_ptr<httplib::Client>> pool_;
  std::size_t attempts_ = 0;
  std::size_t degraded_ = 0;
};

}  // namespace tsearch
