#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace uqgate::llm {

struct ChatMessage {
  std::string role;
  std::string content;
};

struct ChatRequest {
  std::string model;
  std::vector<ChatMessage> messages;
  double temperature = 0.7;
  int n = 1;
  std::optional<std::int64_t> seed;
  int max_tokens = 256;
  bool logprobs = false;
};

struct ChatChoice {
  std::string content;
  std::optional<std::vector<double>> logprobs;
  std::string finish_reason;
};

struct ChatResponse {
  std::vector<ChatChoice> choices;
};

// POST /v1/chat/completions body.
nlohmann::json encode_chat_request(const ChatRequest& req);
ChatRequest decode_chat_request(const nlohmann::json& body);
nlohmann::json encode_chat_response(const ChatResponse& resp);
// Reads choices[].message.content, choices[].logprobs.content[].logprob and
// choices[].finish_reason; choices are ordered by their "index" field when present.
ChatResponse decode_chat_response(const nlohmann::json& body);

/// Chat-completions transport. Implementations throw Error with TransportError
/// (retryable), RateLimited (retry_after set when the server sent one),
/// MultiCompletionRejected, or ApiError.
class LlmClient {
 public:
  virtual ~LlmClient() = default;
  virtual ChatResponse complete(const ChatRequest& req) = 0;
};

struct HttpLlmOptions {
  std::string endpoint;  // base URL; /v1/chat/completions is appended
  std::string api_key;   // sent as a bearer token when non-empty
  double timeout_s = 120.0;
};

class HttpLlmClient final : public LlmClient {
 public:
  explicit HttpLlmClient(HttpLlmOptions options);
  ChatResponse complete(const ChatRequest& req) override;

 private:
  HttpLlmOptions options_;
};

}  // namespace uqgate::llm
