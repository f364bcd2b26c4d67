#include "uqgate/cli.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "uqgate/datasets.hpp"

#ifndef UQGATE_DEFAULT_PROMPT_DIR
#define UQGATE_DEFAULT_PROMPT_DIR "prompts"
#endif

namespace uqgate::cli {

using nlohmann::json;
namespace orch = orchestrator;

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::ConfigError:
    case ErrorCode::SchemaMismatch:
    case ErrorCode::MissingPromptTemplate:
      return kConfigError;
    case ErrorCode::TransportError:
    case ErrorCode::RateLimited:
    case ErrorCode::ApiError:
    case ErrorCode::MultiCompletionRejected:
    case ErrorCode::PersistentFailure:
    case ErrorCode::SidecarDown:
    case ErrorCode::BackendUnavailable:
    case ErrorCode::ScoreOutOfRange:
    case ErrorCode::BatchShapeMismatch:
    case ErrorCode::InvalidRequest:
      return kUpstreamError;
    case ErrorCode::CacheCorrupt:
    case ErrorCode::CacheConflict:
      return kCacheError;
    default:
      return kOtherError;
  }
}

namespace {

// Runs one pipeline stage and prefixes its errors with "[stage] ".
template <typename F>
auto stage(const char* name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error& e) {
    const std::string msg = e.what();
    if (!msg.empty() && msg.front() == '[') throw;
    Error tagged(e.code(), std::string("[") + name + "] " + msg);
    tagged.retry_after = e.retry_after;
    throw tagged;
  }
}

// Advisory lock on a run directory; held for the life of the object.
class DirLock {
 public:
  explicit DirLock(const fs::path& dir) {
    fs::create_directories(dir);
    const auto path = dir / ".lock";
    fd_ = ::open(path.c_str(), O_CREAT | O_RDWR | O_CLOEXEC, 0644);
    if (fd_ < 0) fail(ErrorCode::ConfigError, "cannot open " + path.string());
    if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
      ::close(fd_);
      fail(ErrorCode::ConfigError, dir.string() + " is locked by another uqgate process");
    }
  }
  ~DirLock() {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
  DirLock(const DirLock&) = delete;
  DirLock& operator=(const DirLock&) = delete;

 private:
  int fd_ = -1;
};

void write_text(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::ConfigError, "cannot write " + path.string());
    out << text;
  }
  fs::rename(tmp, path);
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_outputs(const fs::path& dir, const std::vector<UncertaintyScore>& scores,
                   const metrics::EvaluationReport& report) {
  std::string lines;
  for (const auto& s : scores) lines += json(s).dump() + "\n";
  write_text(dir / "scores.jsonl", lines);
  write_text(dir / "report.json", json(report).dump(2) + "\n");
  write_text(dir / "bins.csv", metrics::bins_csv(report.bins));
}

std::string pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", 100.0 * v);
  return buf;
}

std::string fixed4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::string table_row(const metrics::EvaluationReport& r) {
  return r.dataset + "\t" + r.method + "\tN=" + std::to_string(r.n_effective) + "\tACC=" +
         pct(r.accuracy) + "\tECE=" + fixed4(r.ece) + "\tAUROC=" +
         (r.auroc ? fixed4(*r.auroc) : std::string("n/a"));
}

struct SimilaritySetup {
  consistency::Backend backend;
  std::shared_ptr<sim::SimilarityClient> owned;
  sim::SimilarityClient* client = nullptr;
};

SimilaritySetup setup_similarity(Method method, consistency::Backend requested,
                                 const std::string& endpoint, bool fallback, bool offline,
                                 sim::SimilarityClient* override_client,
                                 const sim::HttpSimilarityOptions& base_options) {
  SimilaritySetup s{requested, nullptr, nullptr};
  if (!pipeline::needs_similarity(method) || requested == consistency::Backend::lexical_fallback) {
    return s;
  }
  if (offline) {
    spdlog::info("offline: using lexical similarity instead of {}", consistency::to_string(requested));
    s.backend = consistency::Backend::lexical_fallback;
    return s;
  }
  if (override_client != nullptr) {
    s.owned = std::make_shared<sim::MemoizingSimilarityClient>(
        std::shared_ptr<sim::SimilarityClient>(override_client, [](auto*) {}));
    s.client = s.owned.get();
    return s;
  }
  if (endpoint.empty()) {
    if (fallback) {
      spdlog::warn("no --sim-endpoint; falling back to lexical similarity");
      s.backend = consistency::Backend::lexical_fallback;
      return s;
    }
    fail(ErrorCode::ConfigError, std::string(consistency::to_string(requested)) +
                                     " similarity needs --sim-endpoint (or --sim-backend lexical)");
  }
  auto opts = base_options;
  opts.endpoint = endpoint;
  auto http = std::make_shared<sim::HttpSimilarityClient>(opts);
  const auto health = http->health();
  if (!health.ok) {
    if (fallback) {
      spdlog::warn("similarity sidecar at {} is not healthy (HTTP {}); using lexical fallback",
                   endpoint, health.http_status);
      s.backend = consistency::Backend::lexical_fallback;
      return s;
    }
    fail(ErrorCode::SidecarDown, "similarity sidecar at " + endpoint + " is not healthy (HTTP " +
                                     std::to_string(health.http_status) + ")");
  }
  s.owned = std::make_shared<sim::MemoizingSimilarityClient>(http);
  s.client = s.owned.get();
  return s;
}

std::uint64_t fnv1a(std::string_view data) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

Dataset uniform_dataset(const std::vector<QueryRecord>& queries) {
  if (queries.empty()) fail(ErrorCode::SchemaMismatch, "dataset has no records");
  const Dataset ds = queries.front().dataset;
  for (const auto& q : queries) {
    if (q.dataset != ds) {
      fail(ErrorCode::SchemaMismatch, "records mix datasets '" + std::string(to_string(ds)) + "' and '" +
                                          std::string(to_string(q.dataset)) + "'");
    }
  }
  return ds;
}

// Re-extracts answers when a rescore switches between verbalized and plain parsing.
void reextract(std::vector<SampleRecord>& samples, orch::Extraction extraction,
               const std::vector<QueryRecord>& queries, int max_tokens) {
  std::map<std::string, Dataset> ds;
  for (const auto& q : queries) ds[q.id] = q.dataset;
  for (auto& s : samples) {
    // Length and transport failures are properties of the decode, not of parsing.
    if (s.filter_reason == FilterReason::overlong_output) continue;
    if (s.filter_reason == FilterReason::malformed_structure && s.raw_text.empty()) continue;
    orch::finalize_sample(s, extraction, ds[s.query_id], max_tokens);
  }
}

}  // namespace

orch::DecodeConfig make_decode_config(Method method, std::optional<Regime> regime,
                                      std::optional<int> samples, std::optional<double> temperature,
                                      std::optional<std::int64_t> seed, std::optional<int> max_tokens) {
  auto cfg = orch::default_decode_config(method);
  if (regime) {
    cfg.regime = *regime;
    if (*regime == Regime::SINGLE) cfg.M = 1;
  }
  if (samples) cfg.M = *samples;
  if (temperature) cfg.temperature = *temperature;
  cfg.seed_base = seed.value_or(0);
  if (max_tokens) cfg.max_tokens = *max_tokens;
  orch::validate(cfg, method);
  return cfg;
}

std::string config_hash(const std::string& model_id, const std::vector<QueryRecord>& queries,
                        const orch::DecodeConfig& decode, const std::string& prompt_text) {
  std::string data_blob;
  for (const auto& q : queries) data_blob += json(q).dump() + "\n";
  const json identity = {{"model", model_id},
                         {"queries", fnv1a(data_blob)},
                         {"decode", decode},
                         {"prompt", prompt_text}};
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(identity.dump())));
  return buf;
}

RunOutput cmd_run(const RunSpec& spec, llm::LlmClient* llm, sim::SimilarityClient* sim) {
  if (spec.out_dir.empty()) fail(ErrorCode::ConfigError, "--out is required");
  DirLock lock(spec.out_dir);

  auto queries = stage("ingest", [&] {
    auto recs = datasets::ingest_file(spec.dataset_path, spec.format).records;
    if (spec.limit) recs = datasets::subsample(std::move(recs), *spec.limit, spec.decode.seed_base.value_or(0));
    return recs;
  });
  const Dataset ds = stage("ingest", [&] { return uniform_dataset(queries); });

  auto decode = spec.decode;
  const auto prompt = stage("config", [&] {
    auto p = orch::load_prompt(spec.prompts_dir, ds, spec.method);
    decode.prompt_template = p.name;
    orch::validate(decode, spec.method);
    return p;
  });

  orch::RunManifest tmpl;
  tmpl.model_id = spec.model_id;
  tmpl.dataset = std::string(to_string(ds));
  tmpl.method = std::string(to_string(spec.method));
  tmpl.decode = decode;
  tmpl.config_hash = config_hash(spec.model_id, queries, decode, prompt.text);
  tmpl.run_id = tmpl.dataset + "-" + tmpl.method + "-" + tmpl.config_hash.substr(0, 8);
  if (spec.limit) tmpl.subsample = {{"n", *spec.limit}, {"seed", decode.seed_base.value_or(0)}};

  std::unique_ptr<llm::LlmClient> http_llm;
  if (llm == nullptr && !spec.offline && !spec.endpoint.empty()) {
    http_llm = std::make_unique<llm::HttpLlmClient>(llm::HttpLlmOptions{spec.endpoint, spec.api_key});
    llm = http_llm.get();
  }

  orch::RunOptions ropts;
  ropts.decode = spec.decode_options;
  ropts.decode.model_id = spec.model_id;
  ropts.resume = spec.resume;
  ropts.rebuild = spec.rebuild;
  ropts.offline = spec.offline;
  auto run = stage("decode", [&] {
    return orch::run_dataset(queries, tmpl, prompt, spec.offline ? nullptr : llm, spec.out_dir, ropts);
  });
  datasets::write_queries(spec.out_dir / "queries.jsonl", queries);

  auto simsetup = stage("similarity", [&] {
    return setup_similarity(spec.method, spec.sim_backend, spec.sim_endpoint, spec.sim_fallback,
                            spec.offline, sim, spec.sim_options);
  });

  pipeline::ScoringOptions sopts;
  sopts.method = spec.method;
  sopts.backend = simsetup.backend;
  sopts.symmetry = spec.nli_symmetry;
  sopts.clip_percentile = spec.clip_percentile;
  sopts.has_primary = decode.primary_temperature.has_value();
  sopts.judge.containment = spec.containment;
  auto scored = stage("score", [&] {
    return pipeline::score_queries(queries, run.samples, sopts, simsetup.client);
  });
  auto report = stage("evaluate", [&] {
    return metrics::evaluate(scored.scores, tmpl.dataset, tmpl.method, spec.thresholds);
  });

  auto& m = run.manifest;
  m.n_effective = static_cast<int>(scored.scores.size());
  m.filter_counts = scored.excluded;
  m.normalizer = scored.normalizer;
  m.scoring = {{"options", sopts}, {"thresholds", spec.thresholds}};
  m.finished = orch::utc_timestamp();
  write_outputs(spec.out_dir, scored.scores, report);
  orch::write_manifest(spec.out_dir / "manifest.json", m);

  RunOutput out;
  out.report = std::move(report);
  out.manifest = m;
  out.scores = std::move(scored.scores);
  out.requests_issued = run.requests_issued;
  return out;
}

std::vector<metrics::SweepRow> cmd_sweep(const RunSpec& spec, const std::vector<double>& temperatures,
                                         llm::LlmClient* llm, sim::SimilarityClient* sim) {
  if (temperatures.size() < 2) fail(ErrorCode::ConfigError, "--sweep needs >= 2 temperatures");
  std::map<double, metrics::EvaluationReport> reports;
  for (double t : temperatures) {
    RunSpec sub = spec;
    sub.decode.temperature = t;
    sub.out_dir = spec.out_dir / ("T_" + metrics::format_double(t));
    sub.resume = !spec.rebuild;
    spdlog::info("sweep: T={} -> {}", t, sub.out_dir.string());
    auto out = cmd_run(sub, llm, sim);
    std::cout << "T=" << metrics::format_double(t) << "\t" << table_row(out.report) << "\n";
    reports.emplace(t, std::move(out.report));
  }
  const auto rows = metrics::sweep_aggregate(reports);
  write_text(spec.out_dir / "sweep.csv", metrics::sweep_csv(rows));
  return rows;
}

RunOutput cmd_rescore(const RescoreSpec& spec, sim::SimilarityClient* sim) {
  const fs::path manifest_path = spec.run_dir / "manifest.json";
  const fs::path samples_path = spec.run_dir / "samples.jsonl";
  const fs::path queries_path = spec.run_dir / "queries.jsonl";
  auto [manifest, queries, samples] = stage("load", [&] {
    for (const auto& p : {manifest_path, samples_path, queries_path}) {
      if (!fs::exists(p)) fail(ErrorCode::CacheCorrupt, p.string() + " is missing");
    }
    auto m = orch::read_manifest(manifest_path);
    std::vector<QueryRecord> q;
    try {
      q = datasets::read_queries(queries_path);
    } catch (const Error& e) {
      fail(ErrorCode::CacheCorrupt, e.what());
    }
    return std::tuple(m, q, orch::read_samples(samples_path));
  });

  pipeline::ScoringOptions sopts;
  std::vector<double> thresholds;
  stage("config", [&] {
    if (!manifest.scoring.contains("options")) {
      fail(ErrorCode::CacheCorrupt, "manifest has no scoring settings; the run never finished scoring");
    }
    sopts = manifest.scoring.at("options").get<pipeline::ScoringOptions>();
    thresholds = manifest.scoring.value("thresholds", std::vector<double>{0.8});
    if (!spec.thresholds.empty()) thresholds = spec.thresholds;
    if (spec.method && *spec.method != sopts.method) {
      const auto family = orch::extraction_for(*spec.method);
      if (family != manifest.decode.extraction) {
        reextract(samples, family, queries, manifest.decode.max_tokens);
      }
      sopts.method = *spec.method;
    }
    if ((sopts.method == Method::cocoa || sopts.method == Method::cocoa_or) && !sopts.has_primary) {
      fail(ErrorCode::ConfigError, "this run has no primary decode; cocoa cannot be rescored from it");
    }
    if (spec.backend) sopts.backend = *spec.backend;
  });

  auto simsetup = stage("similarity", [&] {
    return setup_similarity(sopts.method, sopts.backend, spec.sim_endpoint, false, spec.offline, sim,
                            spec.sim_options);
  });
  sopts.backend = simsetup.backend;

  auto scored = stage("score", [&] {
    return pipeline::score_queries(queries, samples, sopts, simsetup.client);
  });
  const std::string method_name(to_string(sopts.method));
  auto report = stage("evaluate", [&] {
    return metrics::evaluate(scored.scores, manifest.dataset, method_name, thresholds);
  });

  const fs::path out_dir = spec.out_dir.empty() ? spec.run_dir / ("rescore-" + method_name) : spec.out_dir;
  fs::create_directories(out_dir);
  write_outputs(out_dir, scored.scores, report);

  RunOutput out;
  out.manifest = manifest;
  out.manifest.method = method_name;
  out.manifest.n_effective = static_cast<int>(scored.scores.size());
  out.manifest.filter_counts = scored.excluded;
  out.manifest.normalizer = scored.normalizer;
  out.manifest.scoring = {{"options", sopts}, {"thresholds", thresholds}};
  write_text(out_dir / "manifest.json", json(out.manifest).dump(2) + "\n");
  out.report = std::move(report);
  out.scores = std::move(scored.scores);
  return out;
}

std::string cmd_report(const std::vector<fs::path>& run_dirs, const fs::path& csv_path) {
  if (run_dirs.empty()) fail(ErrorCode::ConfigError, "report needs at least one run directory");
  struct Row {
    std::vector<std::string> cells;
  };
  const std::vector<std::string> header = {"run",   "dataset",     "method",       "T",
                                           "N",     "ACC",         "ECE",          "AUROC",
                                           "Overconf", "Threshold", "Overall ACC", "Filtered ACC",
                                           "Improvement", "Remaining"};
  std::vector<Row> rows;
  for (const auto& dir : run_dirs) {
    const fs::path rp = dir / "report.json";
    if (!fs::exists(rp)) fail(ErrorCode::ConfigError, rp.string() + " does not exist");
    metrics::EvaluationReport r;
    try {
      r = json::parse(read_text(rp)).get<metrics::EvaluationReport>();
    } catch (const std::exception& e) {
      fail(ErrorCode::CacheCorrupt, rp.string() + ": " + e.what());
    }
    std::string temp = "";
    if (fs::exists(dir / "manifest.json")) {
      temp = metrics::format_double(orch::read_manifest(dir / "manifest.json").decode.temperature);
    }
    const std::string auroc = r.auroc ? fixed4(*r.auroc) : "n/a";
    auto base = std::vector<std::string>{dir.filename().string(), r.dataset, r.method, temp,
                                         std::to_string(r.n_effective), pct(r.accuracy), fixed4(r.ece),
                                         auroc, fixed4(r.overconfidence)};
    if (r.selective.empty()) {
      auto cells = base;
      cells.insert(cells.end(), {"", pct(r.accuracy), "", "", ""});
      rows.push_back({cells});
    }
    for (const auto& s : r.selective) {
      auto cells = base;
      cells.push_back(metrics::format_double(s.threshold));
      cells.push_back(pct(r.accuracy));
      cells.push_back(s.filtered_accuracy ? pct(*s.filtered_accuracy) : "n/a");
      if (s.filtered_accuracy) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%+.2f", 100.0 * (*s.filtered_accuracy - r.accuracy));
        cells.push_back(buf);
      } else {
        cells.push_back("n/a");
      }
      cells.push_back(std::to_string(s.kept) + " / " + std::to_string(s.total));
      rows.push_back({cells});
    }
  }

  std::vector<std::size_t> width(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) width[c] = header[c].size();
  for (const auto& r : rows) {
    for (std::size_t c = 0; c < r.cells.size(); ++c) width[c] = std::max(width[c], r.cells[c].size());
  }
  std::ostringstream text;
  auto emit = [&](const std::vector<std::string>& cells) {
    for (std::size_t c = 0; c < cells.size(); ++c) {
      text << cells[c] << std::string(width[c] - cells[c].size(), ' ');
      text << (c + 1 < cells.size() ? "  " : "\n");
    }
  };
  emit(header);
  for (const auto& r : rows) emit(r.cells);

  if (!csv_path.empty()) {
    std::ostringstream csv;
    auto csv_cell = [](const std::string& s) {
      return s.find(',') == std::string::npos ? s : "\"" + s + "\"";
    };
    for (std::size_t c = 0; c < header.size(); ++c) csv << header[c] << (c + 1 < header.size() ? "," : "\n");
    for (const auto& r : rows) {
      for (std::size_t c = 0; c < r.cells.size(); ++c) {
        csv << csv_cell(r.cells[c]) << (c + 1 < r.cells.size() ? "," : "\n");
      }
    }
    write_text(csv_path, csv.str());
  }
  return text.str();
}

std::vector<QueryRecord> cmd_ingest(const IngestSpec& spec) {
  auto res = stage("ingest", [&] { return datasets::ingest_file(spec.input, spec.format); });
  if (spec.limit) res.records = datasets::subsample(std::move(res.records), *spec.limit, spec.seed);
  if (!spec.output.empty()) datasets::write_queries(spec.output, res.records);
  return res.records;
}

// ---------------------------------------------------------------------------
// Command line

namespace {

struct RunArgs {
  std::string dataset;
  std::string format = "custom";
  std::size_t limit = 0;
  std::string method = "vce_single";
  std::string regime;
  int samples = 0;
  double temperature = 0.7;
  int max_tokens = 256;
  std::int64_t seed = 0;
  std::vector<double> thresholds{0.8};
  std::vector<double> sweep{0.1, 0.3, 0.5, 0.7, 0.9};
  std::string endpoint;
  std::string model = "default";
  std::string sim_endpoint;
  std::string sim_backend = "embedding_cosine";
  std::string nli_symmetry = "average";
  bool sim_fallback = false;
  std::string out;
  std::string prompts = UQGATE_DEFAULT_PROMPT_DIR;
  bool resume = false;
  bool rebuild = false;
  bool offline = false;
  int parallelism = 8;
  double rps = 0.0;
  int max_attempts = 5;
  double backoff = 0.5;
  double clip = msp::kDefaultClipPercentile;
  std::string containment;

  CLI::Option* regime_opt = nullptr;
  CLI::Option* samples_opt = nullptr;
  CLI::Option* temperature_opt = nullptr;
  CLI::Option* max_tokens_opt = nullptr;
  CLI::Option* limit_opt = nullptr;
};

void add_run_options(CLI::App* app, RunArgs& a, bool sweep) {
  app->add_option("--dataset", a.dataset, "Dataset file")->required();
  app->add_option("--format", a.format, "Layout of --dataset: boolq|squad2|triviaqa|gsm8k|custom")
      ->capture_default_str();
  a.limit_opt = app->add_option("--limit", a.limit, "Seeded subsample of N queries (seed = --seed)");
  app->add_option("--method", a.method,
                  "vce_single|vce_multi|msp|consistency|cocoa|cocoa_or")
      ->capture_default_str();
  a.regime_opt = app->add_option("--regime", a.regime, "SINGLE|SEP|TOPK");
  a.samples_opt = app->add_option("--samples,-M", a.samples, "Samples per query");
  if (!sweep) a.temperature_opt = app->add_option("--temperature,-T", a.temperature, "Sampling temperature");
  a.max_tokens_opt = app->add_option("--max-tokens", a.max_tokens, "max_tokens per completion");
  app->add_option("--seed", a.seed, "Seed base for decoding and subsampling")->capture_default_str();
  app->add_option("--threshold", a.thresholds, "Selective-prediction threshold (repeatable)")
      ->capture_default_str();
  if (sweep) {
    app->add_option("--sweep", a.sweep, "Temperatures, comma separated")
        ->delimiter(',')
        ->capture_default_str();
  }
  app->add_option("--endpoint", a.endpoint, "OpenAI-compatible base URL");
  app->add_option("--model", a.model, "Model id sent upstream")->capture_default_str();
  app->add_option("--sim-endpoint", a.sim_endpoint, "Similarity sidecar base URL");
  app->add_option("--sim-backend", a.sim_backend, "embedding_cosine|nli_entailment|lexical_fallback")
      ->capture_default_str();
  app->add_option("--nli-symmetry", a.nli_symmetry, "average|min")->capture_default_str();
  app->add_flag("--sim-fallback", a.sim_fallback, "Use lexical similarity when the sidecar is down");
  app->add_option("--out", a.out, "Run directory")->required();
  app->add_option("--prompts", a.prompts, "Prompt template directory")->capture_default_str();
  app->add_flag("--resume", a.resume, "Continue from cached samples");
  app->add_flag("--rebuild", a.rebuild, "Delete cached samples first");
  app->add_flag("--offline", a.offline, "Cache only; lexical similarity");
  app->add_option("--parallelism", a.parallelism, "In-flight requests")->capture_default_str();
  app->add_option("--rps", a.rps, "Request rate limit (0 = none)")->capture_default_str();
  app->add_option("--max-attempts", a.max_attempts, "Attempts per request")->capture_default_str();
  app->add_option("--backoff", a.backoff, "Base retry backoff in seconds")->capture_default_str();
  app->add_option("--clip", a.clip, "Clip percentile for normalization")->capture_default_str();
  app->add_option("--containment", a.containment, "Alias containment matching: on|off");
}

RunSpec to_spec(const RunArgs& a) {
  RunSpec s;
  s.dataset_path = a.dataset;
  s.format = parse_dataset(a.format);
  if (a.limit_opt && a.limit_opt->count() > 0) s.limit = a.limit;
  s.method = parse_method(a.method);
  std::optional<Regime> regime;
  if (a.regime_opt->count() > 0) regime = parse_regime(a.regime);
  std::optional<int> samples;
  if (a.samples_opt->count() > 0) samples = a.samples;
  std::optional<double> temperature;
  if (a.temperature_opt && a.temperature_opt->count() > 0) temperature = a.temperature;
  std::optional<int> max_tokens;
  if (a.max_tokens_opt->count() > 0) max_tokens = a.max_tokens;
  s.decode = make_decode_config(s.method, regime, samples, temperature, a.seed, max_tokens);
  s.thresholds = a.thresholds;
  s.out_dir = a.out;
  s.prompts_dir = a.prompts;
  s.model_id = a.model;
  s.endpoint = a.endpoint;
  if (const char* key = std::getenv("UQGATE_API_KEY")) s.api_key = key;
  s.sim_endpoint = a.sim_endpoint;
  s.sim_backend = consistency::parse_backend(a.sim_backend);
  s.nli_symmetry = consistency::parse_symmetry(a.nli_symmetry);
  s.sim_fallback = a.sim_fallback;
  s.clip_percentile = a.clip;
  if (!a.containment.empty()) {
    if (a.containment != "on" && a.containment != "off") {
      fail(ErrorCode::ConfigError, "--containment takes on|off");
    }
    s.containment = a.containment == "on";
  }
  s.resume = a.resume;
  s.rebuild = a.rebuild;
  s.offline = a.offline;
  s.decode_options.parallelism = a.parallelism;
  s.decode_options.requests_per_second = a.rps;
  s.decode_options.retry.max_attempts = a.max_attempts;
  s.decode_options.retry.backoff_base_s = a.backoff;
  if (!s.offline && s.endpoint.empty()) {
    spdlog::info("no --endpoint given; decoding is limited to cached samples");
  }
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  auto logger = spdlog::get("uqgate");
  if (!logger) logger = spdlog::stderr_color_mt("uqgate");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  spdlog::set_level(spdlog::level::info);

  CLI::App app{"Confidence estimation and calibration metrics for LLM question answering"};
  app.require_subcommand(1);
  // Subcommands inherit this, so global flags may follow the subcommand.
  app.fallthrough();
  app.set_config("--config", "", "Flat key = value config file; command-line flags win");
  bool verbose = false;
  bool quiet = false;
  app.add_flag("-v,--verbose", verbose, "Debug logging");
  app.add_flag("-q,--quiet", quiet, "Warnings and errors only");

  RunArgs run_args;
  auto* run = app.add_subcommand("run", "Decode, score and evaluate one configuration");
  add_run_options(run, run_args, false);

  RunArgs sweep_args;
  auto* sweep = app.add_subcommand("sweep", "Run over a temperature grid and export sweep.csv");
  add_run_options(sweep, sweep_args, true);

  RescoreSpec rescore_spec;
  std::string rescore_dir, rescore_method, rescore_backend, rescore_out;
  std::vector<double> rescore_thresholds;
  auto* rescore = app.add_subcommand("rescore", "Recompute scores and metrics from a run's cache");
  rescore->add_option("run_dir", rescore_dir, "Run directory")->required();
  rescore->add_option("--method", rescore_method, "Score with a different method");
  rescore->add_option("--sim-backend", rescore_backend, "Override the similarity backend");
  rescore->add_option("--sim-endpoint", rescore_spec.sim_endpoint, "Similarity sidecar base URL");
  rescore->add_option("--threshold", rescore_thresholds, "Selective-prediction thresholds");
  rescore->add_option("--report-out,--out", rescore_out, "Output directory (default run_dir/rescore-<method>)");
  rescore->add_flag("--offline", rescore_spec.offline, "Lexical similarity, no network");

  std::vector<std::string> report_dirs;
  std::string report_csv;
  auto* report = app.add_subcommand("report", "Merge run reports into one table");
  report->add_option("run_dirs", report_dirs, "Run directories")->required();
  report->add_option("--csv", report_csv, "Also write the table as CSV");

  IngestSpec ingest_spec;
  std::string ingest_in, ingest_format = "custom", ingest_out;
  std::size_t ingest_limit = 0;
  auto* ingest = app.add_subcommand("ingest", "Convert a benchmark file to QueryRecord JSONL");
  ingest->add_option("input", ingest_in, "Benchmark file")->required();
  ingest->add_option("--format", ingest_format, "boolq|squad2|triviaqa|gsm8k|custom")->required();
  ingest->add_option("--out", ingest_out, "Output JSONL")->required();
  auto* ingest_limit_opt = ingest->add_option("--limit", ingest_limit, "Seeded subsample size");
  ingest->add_option("--seed", ingest_spec.seed, "Subsample seed")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfigError;
  }
  if (verbose) spdlog::set_level(spdlog::level::debug);
  if (quiet) spdlog::set_level(spdlog::level::warn);

  try {
    if (*run) {
      const auto spec = stage("config", [&] { return to_spec(run_args); });
      const auto out = cmd_run(spec);
      std::cout << table_row(out.report) << "\n";
    } else if (*sweep) {
      const auto spec = stage("config", [&] { return to_spec(sweep_args); });
      cmd_sweep(spec, sweep_args.sweep);
      std::cout << "wrote " << (spec.out_dir / "sweep.csv").string() << "\n";
    } else if (*rescore) {
      stage("config", [&] {
        rescore_spec.run_dir = rescore_dir;
        if (!rescore_method.empty()) rescore_spec.method = parse_method(rescore_method);
        if (!rescore_backend.empty()) rescore_spec.backend = consistency::parse_backend(rescore_backend);
        rescore_spec.thresholds = rescore_thresholds;
        rescore_spec.out_dir = rescore_out;
      });
      const auto out = cmd_rescore(rescore_spec);
      std::cout << table_row(out.report) << "\n";
    } else if (*report) {
      std::cout << cmd_report({report_dirs.begin(), report_dirs.end()}, report_csv);
    } else if (*ingest) {
      stage("config", [&] {
        ingest_spec.input = ingest_in;
        ingest_spec.format = parse_dataset(ingest_format);
        ingest_spec.output = ingest_out;
        if (ingest_limit_opt->count() > 0) ingest_spec.limit = ingest_limit;
      });
      const auto recs = cmd_ingest(ingest_spec);
      std::cout << "wrote " << recs.size() << " records to " << ingest_out << "\n";
    }
  } catch (const Error& e) {
    std::cerr << "uqgate: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "uqgate: " << e.what() << "\n";
    return kOtherError;
  }
  return kOk;
}

}  // namespace uqgate::cli
