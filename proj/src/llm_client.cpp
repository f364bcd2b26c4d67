#include "uqgate/llm_client.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>

#include <httplib.h>

#include "http_util.hpp"
#include "uqgate/error.hpp"

namespace uqgate::llm {

using nlohmann::json;

json encode_chat_request(const ChatRequest& req) {
  json messages = json::array();
  for (const auto& m : req.messages) messages.push_back({{"role", m.role}, {"content", m.content}});
  json j = {{"model", req.model},
            {"messages", std::move(messages)},
            {"temperature", req.temperature},
            {"n", req.n},
            {"max_tokens", req.max_tokens}};
  if (req.seed) j["seed"] = *req.seed;
  if (req.logprobs) j["logprobs"] = true;
  return j;
}

ChatRequest decode_chat_request(const json& body) {
  ChatRequest req;
  req.model = body.value("model", "");
  for (const auto& m : body.at("messages")) {
    req.messages.push_back({m.value("role", ""), m.value("content", "")});
  }
  req.temperature = body.value("temperature", 1.0);
  req.n = body.value("n", 1);
  if (auto it = body.find("seed"); it != body.end() && !it->is_null()) {
    req.seed = it->get<std::int64_t>();
  }
  req.max_tokens = body.value("max_tokens", 256);
  req.logprobs = body.value("logprobs", false);
  return req;
}

json encode_chat_response(const ChatResponse& resp) {
  json choices = json::array();
  for (std::size_t i = 0; i < resp.choices.size(); ++i) {
    const auto& c = resp.choices[i];
    json choice = {{"index", i},
                   {"message", {{"role", "assistant"}, {"content", c.content}}},
                   {"finish_reason", c.finish_reason}};
    if (c.logprobs) {
      json content = json::array();
      for (double lp : *c.logprobs) content.push_back({{"token", ""}, {"logprob", lp}});
      choice["logprobs"] = {{"content", std::move(content)}};
    } else {
      choice["logprobs"] = nullptr;
    }
    choices.push_back(std::move(choice));
  }
  return {{"object", "chat.completion"}, {"choices", std::move(choices)}};
}

ChatResponse decode_chat_response(const json& body) {
  std::vector<std::pair<long, ChatChoice>> indexed;
  const auto& choices = body.at("choices");
  for (std::size_t i = 0; i < choices.size(); ++i) {
    const auto& c = choices[i];
    ChatChoice choice;
    const auto& msg = c.at("message");
    if (auto it = msg.find("content"); it != msg.end() && it->is_string()) {
      choice.content = it->get<std::string>();
    }
    if (auto it = c.find("finish_reason"); it != c.end() && it->is_string()) {
      choice.finish_reason = it->get<std::string>();
    }
    if (auto lp = c.find("logprobs"); lp != c.end() && lp->is_object()) {
      if (auto content = lp->find("content"); content != lp->end() && content->is_array()) {
        std::vector<double> values;
        for (const auto& tok : *content) values.push_back(tok.at("logprob").get<double>());
        choice.logprobs = std::move(values);
      }
    }
    const long index = c.contains("index") ? c.at("index").get<long>() : static_cast<long>(i);
    indexed.emplace_back(index, std::move(choice));
  }
  std::stable_sort(indexed.begin(), indexed.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  ChatResponse resp;
  for (auto& [idx, c] : indexed) resp.choices.push_back(std::move(c));
  return resp;
}

HttpLlmClient::HttpLlmClient(HttpLlmOptions options) : options_(std::move(options)) {
  detail::split_url(options_.endpoint);
}

ChatResponse HttpLlmClient::complete(const ChatRequest& req) {
  const auto url = detail::split_url(options_.endpoint);
  httplib::Client cli(url.origin);
  const auto timeout = std::chrono::milliseconds(static_cast<long>(options_.timeout_s * 1000));
  cli.set_connection_timeout(std::chrono::milliseconds(10000));
  cli.set_read_timeout(timeout);
  cli.set_write_timeout(timeout);
  httplib::Headers headers;
  if (!options_.api_key.empty()) {
    headers.emplace("Authorization", "Bearer " + options_.api_key);
  }

  auto res = cli.Post(url.base_path + "/v1/chat/completions", headers,
                      encode_chat_request(req).dump(), "application/json");
  if (!res) fail(ErrorCode::TransportError, httplib::to_string(res.error()));

  if (res->status == 429) {
    Error e(ErrorCode::RateLimited, "RateLimited: HTTP 429 from " + options_.endpoint);
    if (res->has_header("Retry-After")) {
      e.retry_after = std::strtod(res->get_header_value("Retry-After").c_str(), nullptr);
    }
    throw e;
  }
  if (res->status >= 500) {
    fail(ErrorCode::TransportError, "HTTP " + std::to_string(res->status) + ": " + res->body);
  }
  if (res->status != 200) {
    if (req.n > 1 && (res->status == 400 || res->status == 422)) {
      fail(ErrorCode::MultiCompletionRejected,
           "endpoint rejected n=" + std::to_string(req.n) + " (HTTP " +
               std::to_string(res->status) + "): " + res->body);
    }
    fail(ErrorCode::ApiError, "HTTP " + std::to_string(res->status) + ": " + res->body);
  }

  ChatResponse resp;
  try {
    resp = decode_chat_response(json::parse(res->body));
  } catch (const json::exception& e) {
    fail(ErrorCode::TransportError, std::string("malformed completion body: ") + e.what());
  }
  if (req.n > 1 && static_cast<int>(resp.choices.size()) < req.n) {
    fail(ErrorCode::MultiCompletionRejected,
         "asked for n=" + std::to_string(req.n) + " completions, got " +
             std::to_string(resp.choices.size()));
  }
  return resp;
}

}  // namespace uqgate::llm
