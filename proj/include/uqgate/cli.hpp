#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "uqgate/error.hpp"
#include "uqgate/llm_client.hpp"
#include "uqgate/metrics.hpp"
#include "uqgate/orchestrator.hpp"
#include "uqgate/pipeline.hpp"
#include "uqgate/similarity.hpp"

namespace uqgate::cli {

namespace fs = std::filesystem;

enum ExitCode : int {
  kOk = 0,
  kOtherError = 1,
  kConfigError = 2,
  kUpstreamError = 3,
  kCacheError = 4,
};

int exit_code_for(ErrorCode code);

struct RunSpec {
  fs::path dataset_path;
  Dataset format = Dataset::custom;  // layout of dataset_path; custom = QueryRecord JSONL
  std::optional<std::size_t> limit;  // seeded subsample size
  Method method = Method::vce_single;
  orchestrator::DecodeConfig decode;  // filled from the method defaults plus overrides
  std::vector<double> thresholds{0.8};
  fs::path out_dir;
  fs::path prompts_dir;
  std::string model_id = "default";
  std::string endpoint;
  std::string api_key;
  std::string sim_endpoint;
  consistency::Backend sim_backend = consistency::Backend::embedding_cosine;
  consistency::NliSymmetry nli_symmetry = consistency::NliSymmetry::average;
  bool sim_fallback = false;  // use lexical when the sidecar is unhealthy
  double clip_percentile = msp::kDefaultClipPercentile;
  std::optional<bool> containment;
  bool resume = false;
  bool rebuild = false;
  bool offline = false;
  orchestrator::DecodeOptions decode_options;
  sim::HttpSimilarityOptions sim_options;
};

/// Builds the decode config for `method` from its defaults and the given overrides,
/// then checks method/regime compatibility (ConfigError).
orchestrator::DecodeConfig make_decode_config(Method method, std::optional<Regime> regime,
                                              std::optional<int> samples,
                                              std::optional<double> temperature,
                                              std::optional<std::int64_t> seed,
                                              std::optional<int> max_tokens);

struct RunOutput {
  metrics::EvaluationReport report;
  orchestrator::RunManifest manifest;
  std::vector<UncertaintyScore> scores;
  int requests_issued = 0;
};

/// Ingest, decode, score, evaluate and write the run directory. `llm` and `sim`
/// override the HTTP clients built from the spec's endpoints.
RunOutput cmd_run(const RunSpec& spec, llm::LlmClient* llm = nullptr,
                  sim::SimilarityClient* sim = nullptr);

/// One run per temperature under out_dir/T_<t>, then out_dir/sweep.csv.
std::vector<metrics::SweepRow> cmd_sweep(const RunSpec& spec, const std::vector<double>& temperatures,
                                         llm::LlmClient* llm = nullptr,
                                         sim::SimilarityClient* sim = nullptr);

struct RescoreSpec {
  fs::path run_dir;
  std::optional<Method> method;
  std::optional<consistency::Backend> backend;
  std::vector<double> thresholds;  // empty: reuse the run's thresholds
  fs::path out_dir;                // empty: run_dir/rescore-<method>
  std::string sim_endpoint;
  bool offline = false;  // lexical similarity, no network
  sim::HttpSimilarityOptions sim_options;
};

/// Re-scores a run directory from samples.jsonl without decoding.
RunOutput cmd_rescore(const RescoreSpec& spec, sim::SimilarityClient* sim = nullptr);

/// Merges run directories into one comparison table; writes CSV when csv_path is set.
std::string cmd_report(const std::vector<fs::path>& run_dirs, const fs::path& csv_path = {});

struct IngestSpec {
  fs::path input;
  Dataset format = Dataset::custom;
  fs::path output;
  std::optional<std::size_t> limit;
  std::uint64_t seed = 0;
};

std::vector<QueryRecord> cmd_ingest(const IngestSpec& spec);

/// config_hash: FNV-1a over the canonical JSON of the decode identity.
std::string config_hash(const std::string& model_id, const std::vector<QueryRecord>& queries,
                        const orchestrator::DecodeConfig& decode, const std::string& prompt_text);

/// Full command-line entry point; returns the process exit code.
int main(int argc, char** argv);

}  // namespace uqgate::cli
