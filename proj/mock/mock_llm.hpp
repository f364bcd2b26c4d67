#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "uqgate/llm_client.hpp"

namespace uqgate::mock {

struct ScriptedResponse {
  std::string content;
  std::optional<std::vector<double>> logprobs;
  std::string finish_reason = "stop";
};

// Responses for prompts containing `match`.
struct Script {
  std::string match;
  std::vector<ScriptedResponse> responses;
  // Served instead of `responses` when temperature <= 0.3.
  std::optional<ScriptedResponse> greedy;
  // Always answer HTTP 500 for this prompt.
  bool fail = false;
};

struct LlmFixture {
  std::vector<Script> scripts;
  ScriptedResponse fallback;  // no script matched
  int fail_first_n = 0;       // HTTP 500 for the first N requests
  int rate_limit_first_n = 0; // then HTTP 429 for the next N
  double retry_after_s = 0.0;
  bool reject_multi = false;  // HTTP 400 when n > 1
};

// Fixture JSON:
// {"scripts":[{"match":"...","responses":[{"content":"...","logprobs":[...]}],
//   "greedy":{...},"fail":false}], "fallback":{...}, "fail_first_n":0,
//  "rate_limit_first_n":0, "retry_after":0, "reject_multi":false}
LlmFixture parse_llm_fixture(const nlohmann::json& j);
LlmFixture load_llm_fixture(const std::filesystem::path& path);

/// Deterministic chat-completions server. For n = 1 the response is
/// responses[seed % size] (the greedy response at low temperature); for n > 1 the
/// choices are responses[0..n-1], cycling.
class MockLlmServer {
 public:
  explicit MockLlmServer(LlmFixture fixture, int port = 0);
  ~MockLlmServer();
  MockLlmServer(const MockLlmServer&) = delete;
  MockLlmServer& operator=(const MockLlmServer&) = delete;

  int port() const;
  std::string endpoint() const;
  // Every request received, in arrival order (including rejected ones).
  std::vector<llm::ChatRequest> requests() const;
  void clear_requests();
  void wait();  // blocks until stop()
  void stop();

  // The response the server would give; no failure injection.
  llm::ChatResponse respond(const llm::ChatRequest& req) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// In-process LlmClient that answers from a fixture without HTTP.
class FixtureLlmClient final : public llm::LlmClient {
 public:
  explicit FixtureLlmClient(LlmFixture fixture);
  ~FixtureLlmClient() override;
  llm::ChatResponse complete(const llm::ChatRequest& req) override;
  int calls() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace uqgate::mock
