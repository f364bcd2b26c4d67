#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "uqgate/llm_client.hpp"
#include "uqgate/msp.hpp"
#include "uqgate/types.hpp"

namespace uqgate::orchestrator {

// How answers are pulled out of raw completions.
enum class Extraction { verbalized, plain };

Extraction extraction_for(Method method);

struct DecodeConfig {
  Regime regime = Regime::SINGLE;
  int M = 1;
  double temperature = 0.7;
  int max_tokens = 256;
  std::optional<std::int64_t> seed_base;
  std::string prompt_template;  // template name, e.g. "triviaqa.vce"
  bool request_logprobs = false;
  Extraction extraction = Extraction::plain;
  // When set, sample 0 is an extra SINGLE decode at this temperature (the
  // primary answer) and the M regime samples take indices 1..M.
  std::optional<double> primary_temperature;

  int total_samples() const { return M + (primary_temperature ? 1 : 0); }
};

// Default decode shapes: M = 5 for multi-sample VCE and consistency, M = 10 SEP
// alternatives plus a T = 0.2 primary decode for cocoa.
DecodeConfig default_decode_config(Method method);
void validate(const DecodeConfig& cfg, Method method);

void to_json(nlohmann::json& j, const DecodeConfig& c);
void from_json(const nlohmann::json& j, DecodeConfig& c);

/// Prompt template with {question} and {context} placeholders. Leading lines
/// starting with '#' are a header (e.g. "# version: 2") and are not sent.
struct PromptTemplate {
  std::string name;
  std::string text;
  std::string render(const QueryRecord& q) const;
};

/// Finds "<dataset>.<method>.txt", then "<dataset>.<family>.txt", then
/// "default.<family>.txt" in `dir`, where family is "vce" or "answer".
PromptTemplate load_prompt(const std::filesystem::path& dir, Dataset dataset, Method method);

/// Pulls the answer out of a plain completion: the text after "Answer:" when
/// present, otherwise the first non-empty line (the whole text for gsm8k).
std::string extract_plain_answer(std::string_view raw, Dataset dataset);

/// Fills extracted_answer / verbalized_confidence and applies output filtering:
/// empty_output, overlong_output (finish_reason "length" or more than
/// 4 * max_tokens words), unparseable_confidence, malformed_structure.
void finalize_sample(SampleRecord& s, Extraction extraction, Dataset dataset, int max_tokens,
                     std::string_view finish_reason = {});

struct RetryPolicy {
  int max_attempts = 5;
  double backoff_base_s = 0.5;
  double max_backoff_s = 30.0;
};

/// Minimum spacing between requests to one endpoint; 0 disables it.
class RateLimiter {
 public:
  explicit RateLimiter(double requests_per_second) : rps_(requests_per_second) {}
  void acquire();

 private:
  double rps_;
  std::mutex mutex_;
  std::chrono::steady_clock::time_point next_{};
};

/// Retries TransportError with exponential backoff and RateLimited after the
/// server's Retry-After; gives up with PersistentFailure after max_attempts.
llm::ChatResponse complete_with_retry(llm::LlmClient& client, const llm::ChatRequest& req,
                                      const RetryPolicy& policy, RateLimiter* limiter = nullptr);

struct DecodeOptions {
  std::string model_id = "default";
  int parallelism = 8;
  double requests_per_second = 0.0;
  RetryPolicy retry;
};

/// Decodes one query. Returns exactly cfg.total_samples() records; a request that
/// fails persistently yields filtered(malformed_structure) records.
std::vector<SampleRecord> decode_query(const QueryRecord& query, const DecodeConfig& cfg,
                                       const PromptTemplate& prompt, llm::LlmClient& client,
                                       const DecodeOptions& options = {});

/// Append-only JSONL store of SampleRecords with a single writer.
class SampleCache {
 public:
  explicit SampleCache(std::filesystem::path path);

  // Reads existing records. A torn final line (no trailing newline) is dropped and
  // truncated away; any other unreadable line throws CacheCorrupt. Duplicate keys
  // keep the first record.
  std::map<std::pair<std::string, int>, SampleRecord> load();
  void append(std::span<const SampleRecord> records);
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  std::mutex mutex_;
  std::ofstream out_;
};

std::vector<SampleRecord> read_samples(const std::filesystem::path& path);

struct RunManifest {
  std::string run_id;
  std::string model_id;
  std::string dataset;
  std::string method;
  DecodeConfig decode;
  int n_requested = 0;
  int n_effective = 0;
  // Queries excluded from evaluation, by reason; n_effective = n_requested - sum.
  std::map<std::string, int> filter_counts;
  // Individual filtered records in samples.jsonl, by reason.
  std::map<std::string, int> sample_filter_counts;
  std::optional<msp::NormalizationStats> normalizer;
  std::string started;
  std::string finished;
  std::string config_hash;
  // Settings the scoring stage used, so a rescore can replay them.
  nlohmann::json scoring = nlohmann::json::object();
  // {"n": ..., "seed": ...} when the dataset was subsampled; null otherwise.
  nlohmann::json subsample;
};

void to_json(nlohmann::json& j, const RunManifest& m);
void from_json(const nlohmann::json& j, RunManifest& m);
RunManifest read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const RunManifest& m);

struct RunOptions {
  DecodeOptions decode;
  bool resume = false;
  bool rebuild = false;
  bool offline = false;  // cache only: a missing sample is an error
};

struct RunResult {
  std::vector<SampleRecord> samples;  // ordered by query order, then sample_index
  RunManifest manifest;
  int requests_issued = 0;
  int tasks_from_cache = 0;
};

/// Decodes every query into `run_dir`/samples.jsonl, resuming from cached records
/// when the manifest's config hash matches. The manifest passed in supplies
/// run identity (model, dataset, method, decode config, config_hash).
RunResult run_dataset(std::span<const QueryRecord> queries, const RunManifest& manifest_template,
                      const PromptTemplate& prompt, llm::LlmClient* client,
                      const std::filesystem::path& run_dir, const RunOptions& options);

std::string utc_timestamp();

}  // namespace uqgate::orchestrator
