#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace uqgate::sim {

enum class WireBackend { embedding, nli };

std::string_view to_string(WireBackend b);
WireBackend parse_wire_backend(std::string_view s);

struct SimilarityRequest {
  WireBackend backend = WireBackend::embedding;
  std::vector<std::pair<std::string, std::string>> pairs;
  std::string batch_id;
};

// Throws InvalidRequest when pairs is empty or any text is empty.
void validate_request(const SimilarityRequest& req);

// Wire format: {"backend":"embedding"|"nli","pairs":[["a","b"],...]}
std::string encode_request(const SimilarityRequest& req);
SimilarityRequest decode_request(std::string_view body);
// Wire format: {"scores":[...]}
std::string encode_scores(const std::vector<double>& scores);
// Checks shape and range: BatchShapeMismatch / ScoreOutOfRange.
std::vector<double> decode_scores(std::string_view body, std::size_t expected);

/// Scores (a, b) pairs. Embedding scores are cosines rescaled to [0, 1]; nli
/// scores are directional entailment probabilities P(a entails b).
class SimilarityClient {
 public:
  virtual ~SimilarityClient() = default;
  virtual std::vector<double> score_pairs(const SimilarityRequest& req) = 0;
  virtual std::string name() const = 0;
};

/// Token-set Jaccard on lowercased, punctuation-stripped text.
double lexical_similarity(std::string_view a, std::string_view b);

/// Offline stand-in: Jaccard for both wire backends.
class LexicalSimilarityClient final : public SimilarityClient {
 public:
  std::vector<double> score_pairs(const SimilarityRequest& req) override;
  std::string name() const override { return "lexical"; }
};

struct HttpSimilarityOptions {
  std::string endpoint;  // e.g. http://127.0.0.1:8600
  std::size_t max_batch = 64;
  double timeout_s = 30.0;
  int retries = 3;
  double backoff_base_s = 0.25;
  int max_in_flight = 4;
  unsigned jitter_seed = 0;
};

struct HealthStatus {
  bool ok = false;
  int http_status = 0;
  nlohmann::json models;
};

/// Client for the similarity sidecar. Requests are split into batches of at most
/// `max_batch` pairs; batches are sent concurrently and reassembled in order.
class HttpSimilarityClient final : public SimilarityClient {
 public:
  explicit HttpSimilarityClient(HttpSimilarityOptions options);

  std::vector<double> score_pairs(const SimilarityRequest& req) override;
  std::string name() const override { return "http:" + options_.endpoint; }

  HealthStatus health() const;

 private:
  std::vector<double> send_batch(const SimilarityRequest& batch);
  double jitter();

  HttpSimilarityOptions options_;
  std::mutex rng_mutex_;
  unsigned long rng_state_;
};

/// Per-run memoization of pair scores keyed by (backend, a, b).
class MemoizingSimilarityClient final : public SimilarityClient {
 public:
  explicit MemoizingSimilarityClient(std::shared_ptr<SimilarityClient> inner)
      : inner_(std::move(inner)) {}

  std::vector<double> score_pairs(const SimilarityRequest& req) override;
  std::string name() const override { return inner_->name(); }
  std::size_t cached() const;

 private:
  using Key = std::tuple<WireBackend, std::string, std::string>;
  std::shared_ptr<SimilarityClient> inner_;
  mutable std::mutex mutex_;
  std::map<Key, double> cache_;
};

}  // namespace uqgate::sim
