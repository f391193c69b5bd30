#pragma once

// Local chat-completions server replaying canned responses, for wire tests.

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <cmath>
#include <deque>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace stub {

struct Canned {
  int status = 200;
  std::string body;
};

class ChatServer {
 public:
  ChatServer() {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      Canned reply{500, "{}"};
      {
        std::lock_guard lock(mu_);
        requests_.push_back(req.body);
        auth_.push_back(req.get_header_value("Authorization"));
        if (!queue_.empty()) {
          reply = queue_.front();
          queue_.pop_front();
        }
      }
      res.status = reply.status;
      res.set_content(reply.body, "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~ChatServer() {
    server_.stop();
    thread_.join();
  }

  std::string base_url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1"; }

  void push(int status, std::string body) {
    std::lock_guard lock(mu_);
    queue_.push_back({status, std::move(body)});
  }
  std::vector<std::string> requests() const {
    std::lock_guard lock(mu_);
    return requests_;
  }
  std::vector<std::string> auth_headers() const {
    std::lock_guard lock(mu_);
    return auth_;
  }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
  mutable std::mutex mu_;
  std::deque<Canned> queue_;
  std::vector<std::string> requests_;
  std::vector<std::string> auth_;
};

struct Token {
  std::string token;
  double prob;
  std::vector<std::pair<std::string, double>> top;  // (token, prob)
};

/// A chat-completions response body; `with_logprobs = false` omits the block.
inline std::string completion(const std::string& text, const std::vector<Token>& tokens, bool with_logprobs = true,
                              bool with_top = true) {
  nlohmann::json choice = {{"index", 0},
                           {"message", {{"role", "assistant"}, {"content", text}}},
                           {"finish_reason", "stop"}};
  if (with_logprobs) {
    nlohmann::json content = nlohmann::json::array();
    for (const auto& t : tokens) {
      nlohmann::json entry = {{"token", t.token}, {"logprob", std::log(t.prob)}};
      if (with_top) {
        nlohmann::json top = nlohmann::json::array();
        for (const auto& [tok, p] : t.top) top.push_back({{"token", tok}, {"logprob", std::log(p)}});
        entry["top_logprobs"] = top;
      }
      content.push_back(entry);
    }
    choice["logprobs"] = {{"content", content}};
  }
  return nlohmann::json{{"id", "cmpl-1"}, {"object", "chat.completion"}, {"choices", {choice}}}.dump();
}

}  // namespace stub
