#include "mock_llm.hpp"

#include <atomic>
#include <fstream>
#include <mutex>
#include <thread>

#include <httplib.h>

#include "uqgate/error.hpp"

namespace uqgate::mock {

using nlohmann::json;

namespace {

ScriptedResponse parse_response(const json& j) {
  ScriptedResponse r;
  r.content = j.value("content", "");
  if (auto it = j.find("logprobs"); it != j.end() && it->is_array()) {
    r.logprobs = it->get<std::vector<double>>();
  }
  r.finish_reason = j.value("finish_reason", "stop");
  return r;
}

const Script* find_script(const LlmFixture& f, const llm::ChatRequest& req) {
  std::string prompt;
  for (const auto& m : req.messages) prompt += m.content + "\n";
  for (const auto& s : f.scripts) {
    if (prompt.find(s.match) != std::string::npos) return &s;
  }
  return nullptr;
}

llm::ChatChoice to_choice(const ScriptedResponse& r, bool with_logprobs) {
  llm::ChatChoice c;
  c.content = r.content;
  c.finish_reason = r.finish_reason;
  if (with_logprobs) c.logprobs = r.logprobs.value_or(std::vector<double>{});
  return c;
}

llm::ChatResponse answer(const LlmFixture& f, const llm::ChatRequest& req) {
  llm::ChatResponse resp;
  const Script* s = find_script(f, req);
  if (s == nullptr || s->responses.empty()) {
    for (int i = 0; i < std::max(1, req.n); ++i) resp.choices.push_back(to_choice(f.fallback, req.logprobs));
    return resp;
  }
  const auto size = static_cast<std::int64_t>(s->responses.size());
  if (req.n <= 1) {
    if (s->greedy && req.temperature <= 0.3) {
      resp.choices.push_back(to_choice(*s->greedy, req.logprobs));
    } else {
      const std::int64_t seed = req.seed.value_or(0);
      const auto idx = static_cast<std::size_t>(((seed % size) + size) % size);
      resp.choices.push_back(to_choice(s->responses[idx], req.logprobs));
    }
    return resp;
  }
  for (int i = 0; i < req.n; ++i) {
    resp.choices.push_back(to_choice(s->responses[static_cast<std::size_t>(i % size)], req.logprobs));
  }
  return resp;
}

}  // namespace

LlmFixture parse_llm_fixture(const json& j) {
  LlmFixture f;
  for (const auto& s : j.value("scripts", json::array())) {
    Script script;
    script.match = s.at("match").get<std::string>();
    for (const auto& r : s.value("responses", json::array())) script.responses.push_back(parse_response(r));
    if (auto g = s.find("greedy"); g != s.end() && g->is_object()) script.greedy = parse_response(*g);
    script.fail = s.value("fail", false);
    f.scripts.push_back(std::move(script));
  }
  if (auto fb = j.find("fallback"); fb != j.end() && fb->is_object()) f.fallback = parse_response(*fb);
  f.fail_first_n = j.value("fail_first_n", 0);
  f.rate_limit_first_n = j.value("rate_limit_first_n", 0);
  f.retry_after_s = j.value("retry_after", 0.0);
  f.reject_multi = j.value("reject_multi", false);
  return f;
}

LlmFixture load_llm_fixture(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::ConfigError, "cannot read fixture " + path.string());
  return parse_llm_fixture(json::parse(in));
}

struct MockLlmServer::Impl {
  LlmFixture fixture;
  httplib::Server server;
  std::thread thread;
  int port = 0;
  mutable std::mutex mutex;
  std::vector<llm::ChatRequest> log;
  int served = 0;
};

MockLlmServer::MockLlmServer(LlmFixture fixture, int port) : impl_(std::make_unique<Impl>()) {
  impl_->fixture = std::move(fixture);
  Impl* impl = impl_.get();

  impl->server.Post(R"(.*/v1/chat/completions)", [impl](const httplib::Request& http_req,
                                                         httplib::Response& res) {
    llm::ChatRequest req;
    try {
      req = llm::decode_chat_request(json::parse(http_req.body));
    } catch (const std::exception& e) {
      res.status = 400;
      res.set_content(json{{"error", e.what()}}.dump(), "application/json");
      return;
    }
    int nth = 0;
    {
      std::lock_guard lock(impl->mutex);
      impl->log.push_back(req);
      nth = impl->served++;
    }
    const auto& f = impl->fixture;
    if (nth < f.fail_first_n) {
      res.status = 500;
      res.set_content(R"({"error":"injected failure"})", "application/json");
      return;
    }
    if (nth < f.fail_first_n + f.rate_limit_first_n) {
      res.status = 429;
      res.set_header("Retry-After", std::to_string(f.retry_after_s));
      res.set_content(R"({"error":"rate limited"})", "application/json");
      return;
    }
    if (f.reject_multi && req.n > 1) {
      res.status = 400;
      res.set_content(R"({"error":"n > 1 is not supported"})", "application/json");
      return;
    }
    if (const Script* s = find_script(f, req); s != nullptr && s->fail) {
      res.status = 500;
      res.set_content(R"({"error":"scripted failure"})", "application/json");
      return;
    }
    res.set_content(llm::encode_chat_response(answer(f, req)).dump(), "application/json");
  });

  impl->server.Get("/_requests", [impl](const httplib::Request&, httplib::Response& res) {
    json out = json::array();
    std::lock_guard lock(impl->mutex);
    for (const auto& r : impl->log) out.push_back(llm::encode_chat_request(r));
    res.set_content(out.dump(), "application/json");
  });

  if (port == 0) {
    impl->port = impl->server.bind_to_any_port("127.0.0.1");
  } else {
    impl->port = impl->server.bind_to_port("127.0.0.1", port) ? port : -1;
  }
  if (impl->port <= 0) fail(ErrorCode::ConfigError, "mock LLM server could not bind a port");
  impl->thread = std::thread([impl] { impl->server.listen_after_bind(); });
  impl->server.wait_until_ready();
}

MockLlmServer::~MockLlmServer() { stop(); }

int MockLlmServer::port() const { return impl_->port; }

std::string MockLlmServer::endpoint() const { return "http://127.0.0.1:" + std::to_string(impl_->port); }

std::vector<llm::ChatRequest> MockLlmServer::requests() const {
  std::lock_guard lock(impl_->mutex);
  return impl_->log;
}

void MockLlmServer::clear_requests() {
  std::lock_guard lock(impl_->mutex);
  impl_->log.clear();
}

void MockLlmServer::wait() {
  if (impl_->thread.joinable()) impl_->thread.join();
}

void MockLlmServer::stop() {
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

llm::ChatResponse MockLlmServer::respond(const llm::ChatRequest& req) const {
  return answer(impl_->fixture, req);
}

struct FixtureLlmClient::Impl {
  LlmFixture fixture;
  std::atomic<int> calls{0};
};

FixtureLlmClient::FixtureLlmClient(LlmFixture fixture) : impl_(std::make_unique<Impl>()) {
  impl_->fixture = std::move(fixture);
}

FixtureLlmClient::~FixtureLlmClient() = default;

llm::ChatResponse FixtureLlmClient::complete(const llm::ChatRequest& req) {
  const int nth = impl_->calls++;
  const auto& f = impl_->fixture;
  if (nth < f.fail_first_n) fail(ErrorCode::TransportError, "injected failure");
  if (const Script* s = find_script(f, req); s != nullptr && s->fail) {
    fail(ErrorCode::TransportError, "scripted failure");
  }
  if (f.reject_multi && req.n > 1) fail(ErrorCode::MultiCompletionRejected, "n > 1 rejected");
  return answer(f, req);
}

int FixtureLlmClient::calls() const { return impl_->calls.load(); }

}  // namespace uqgate::mock
