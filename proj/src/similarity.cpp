#include "uqgate/similarity.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <future>
#include <random>
#include <set>
#include <thread>

#include <httplib.h>

#include "http_util.hpp"
#include "uqgate/error.hpp"

namespace uqgate::sim {

using nlohmann::json;

std::string_view to_string(WireBackend b) {
  return b == WireBackend::embedding ? "embedding" : "nli";
}

WireBackend parse_wire_backend(std::string_view s) {
  if (s == "embedding") return WireBackend::embedding;
  if (s == "nli") return WireBackend::nli;
  fail(ErrorCode::InvalidRequest, "unknown similarity backend '" + std::string(s) + "'");
}

void validate_request(const SimilarityRequest& req) {
  if (req.pairs.empty()) fail(ErrorCode::InvalidRequest, "similarity request has no pairs");
  for (const auto& [a, b] : req.pairs) {
    if (a.empty() || b.empty()) fail(ErrorCode::InvalidRequest, "similarity pair with empty text");
  }
}

std::string encode_request(const SimilarityRequest& req) {
  json pairs = json::array();
  for (const auto& [a, b] : req.pairs) pairs.push_back(json::array({a, b}));
  return json{{"backend", to_string(req.backend)}, {"pairs", std::move(pairs)}}.dump();
}

SimilarityRequest decode_request(std::string_view body) {
  SimilarityRequest req;
  try {
    const json j = json::parse(body);
    req.backend = parse_wire_backend(j.at("backend").get<std::string>());
    for (const auto& p : j.at("pairs")) {
      if (!p.is_array() || p.size() != 2) fail(ErrorCode::InvalidRequest, "pair must have 2 texts");
      req.pairs.emplace_back(p[0].get<std::string>(), p[1].get<std::string>());
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::InvalidRequest, e.what());
  }
  validate_request(req);
  return req;
}

std::string encode_scores(const std::vector<double>& scores) {
  return json{{"scores", scores}}.dump();
}

std::vector<double> decode_scores(std::string_view body, std::size_t expected) {
  std::vector<double> scores;
  try {
    scores = json::parse(body).at("scores").get<std::vector<double>>();
  } catch (const json::exception& e) {
    fail(ErrorCode::BatchShapeMismatch, std::string("bad similarity response: ") + e.what());
  }
  if (scores.size() != expected) {
    fail(ErrorCode::BatchShapeMismatch, "expected " + std::to_string(expected) + " scores, got " +
                                            std::to_string(scores.size()));
  }
  for (double s : scores) {
    if (!(s >= 0.0 && s <= 1.0)) {
      fail(ErrorCode::ScoreOutOfRange, "similarity score " + std::to_string(s) + " outside [0,1]");
    }
  }
  return scores;
}

namespace {

std::set<std::string> token_set(std::string_view text) {
  std::set<std::string> out;
  std::string cur;
  for (char c : text) {
    const auto uc = static_cast<unsigned char>(c);
    if (std::isspace(uc)) {
      if (!cur.empty()) out.insert(std::move(cur));
      cur.clear();
    } else if (!std::ispunct(uc)) {
      cur.push_back(static_cast<char>(std::tolower(uc)));
    }
  }
  if (!cur.empty()) out.insert(std::move(cur));
  return out;
}

}  // namespace

double lexical_similarity(std::string_view a, std::string_view b) {
  const auto ta = token_set(a);
  const auto tb = token_set(b);
  if (ta.empty() && tb.empty()) return 1.0;
  std::size_t inter = 0;
  for (const auto& t : ta) inter += tb.count(t);
  const std::size_t uni = ta.size() + tb.size() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

std::vector<double> LexicalSimilarityClient::score_pairs(const SimilarityRequest& req) {
  validate_request(req);
  std::vector<double> out;
  out.reserve(req.pairs.size());
  for (const auto& [a, b] : req.pairs) out.push_back(lexical_similarity(a, b));
  return out;
}

HttpSimilarityClient::HttpSimilarityClient(HttpSimilarityOptions options)
    : options_(std::move(options)), rng_state_(options_.jitter_seed) {
  if (options_.max_batch == 0) fail(ErrorCode::ConfigError, "max_batch must be >= 1");
  if (options_.max_in_flight < 1) options_.max_in_flight = 1;
  detail::split_url(options_.endpoint);  // validates
}

double HttpSimilarityClient::jitter() {
  std::lock_guard lock(rng_mutex_);
  std::mt19937 rng(static_cast<unsigned>(rng_state_++));
  return std::uniform_real_distribution<double>(0.5, 1.5)(rng);
}

HealthStatus HttpSimilarityClient::health() const {
  const auto url = detail::split_url(options_.endpoint);
  httplib::Client cli(url.origin);
  cli.set_connection_timeout(std::chrono::milliseconds(2000));
  cli.set_read_timeout(std::chrono::milliseconds(5000));
  HealthStatus st;
  auto res = cli.Get(url.base_path + "/health");
  if (!res) return st;
  st.http_status = res->status;
  if (res->status == 200) {
    try {
      const json j = json::parse(res->body);
      st.ok = j.value("status", "") == "ok";
      st.models = j.value("models", json::object());
    } catch (const json::exception&) {
      st.ok = false;
    }
  }
  return st;
}

std::vector<double> HttpSimilarityClient::send_batch(const SimilarityRequest& batch) {
  const auto url = detail::split_url(options_.endpoint);
  const std::string body = encode_request(batch);
  const auto timeout = std::chrono::milliseconds(static_cast<long>(options_.timeout_s * 1000));
  std::string last_error = "no attempt made";
  for (int attempt = 0; attempt <= options_.retries; ++attempt) {
    if (attempt > 0) {
      const double wait = options_.backoff_base_s * std::pow(2.0, attempt - 1) * jitter();
      std::this_thread::sleep_for(std::chrono::duration<double>(wait));
    }
    httplib::Client cli(url.origin);
    cli.set_connection_timeout(timeout);
    cli.set_read_timeout(timeout);
    cli.set_write_timeout(timeout);
    auto res = cli.Post(url.base_path + "/similarity", body, "application/json");
    if (!res) {
      last_error = "transport: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status == 200) return decode_scores(res->body, batch.pairs.size());
    if (res->status == 400) {
      fail(ErrorCode::InvalidRequest, "sidecar rejected request: " + res->body);
    }
    last_error = "HTTP " + std::to_string(res->status) + ": " + res->body;
  }
  fail(ErrorCode::SidecarDown, options_.endpoint + " after " +
                                   std::to_string(options_.retries + 1) +
                                   " attempts: " + last_error);
}

std::vector<double> HttpSimilarityClient::score_pairs(const SimilarityRequest& req) {
  validate_request(req);
  std::vector<SimilarityRequest> batches;
  for (std::size_t start = 0; start < req.pairs.size(); start += options_.max_batch) {
    SimilarityRequest b;
    b.backend = req.backend;
    b.batch_id = req.batch_id + "/" + std::to_string(batches.size());
    const auto end = std::min(req.pairs.size(), start + options_.max_batch);
    b.pairs.assign(req.pairs.begin() + static_cast<std::ptrdiff_t>(start),
                   req.pairs.begin() + static_cast<std::ptrdiff_t>(end));
    batches.push_back(std::move(b));
  }

  std::vector<std::vector<double>> results(batches.size());
  const auto wave = static_cast<std::size_t>(options_.max_in_flight);
  for (std::size_t first = 0; first < batches.size(); first += wave) {
    std::vector<std::future<std::vector<double>>> inflight;
    const auto last = std::min(batches.size(), first + wave);
    for (std::size_t i = first; i < last; ++i) {
      inflight.push_back(
          std::async(std::launch::async, [this, &batches, i] { return send_batch(batches[i]); }));
    }
    for (std::size_t i = first; i < last; ++i) results[i] = inflight[i - first].get();
  }

  std::vector<double> out;
  out.reserve(req.pairs.size());
  for (auto& r : results) out.insert(out.end(), r.begin(), r.end());
  return out;
}

std::vector<double> MemoizingSimilarityClient::score_pairs(const SimilarityRequest& req) {
  validate_request(req);
  std::vector<double> out(req.pairs.size(), 0.0);
  SimilarityRequest missing;
  missing.backend = req.backend;
  missing.batch_id = req.batch_id;
  std::vector<std::pair<std::size_t, std::size_t>> missing_at;  // (request slot, missing slot)
  std::map<std::pair<std::string, std::string>, std::size_t> first_seen;
  {
    std::lock_guard lock(mutex_);
    for (std::size_t i = 0; i < req.pairs.size(); ++i) {
      auto it = cache_.find(Key{req.backend, req.pairs[i].first, req.pairs[i].second});
      if (it != cache_.end()) {
        out[i] = it->second;
        continue;
      }
      // Repeats within one request are sent once.
      const auto [slot, added] = first_seen.try_emplace(req.pairs[i], missing.pairs.size());
      if (added) missing.pairs.push_back(req.pairs[i]);
      missing_at.emplace_back(i, slot->second);
    }
  }
  if (missing.pairs.empty()) return out;

  const auto fresh = inner_->score_pairs(missing);
  if (fresh.size() != missing.pairs.size()) {
    fail(ErrorCode::BatchShapeMismatch, "inner similarity client returned wrong length");
  }
  std::lock_guard lock(mutex_);
  for (const auto& [i, k] : missing_at) out[i] = fresh[k];
  for (std::size_t k = 0; k < fresh.size(); ++k) {
    cache_[Key{req.backend, missing.pairs[k].first, missing.pairs[k].second}] = fresh[k];
  }
  return out;
}

std::size_t MemoizingSimilarityClient::cached() const {
  std::lock_guard lock(mutex_);
  return cache_.size();
}

}  // namespace uqgate::sim
