#include "uqgate/orchestrator.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <ctime>
#include <exception>
#include <random>
#include <regex>
#include <sstream>
#include <thread>

#include <spdlog/spdlog.h>

#include "uqgate/answer.hpp"
#include "uqgate/error.hpp"
#include "uqgate/vce.hpp"

namespace uqgate::orchestrator {

namespace fs = std::filesystem;
using nlohmann::json;

Extraction extraction_for(Method method) {
  return method == Method::vce_single || method == Method::vce_multi ? Extraction::verbalized
                                                                      : Extraction::plain;
}

DecodeConfig default_decode_config(Method method) {
  DecodeConfig c;
  c.extraction = extraction_for(method);
  switch (method) {
    case Method::vce_single:
      break;
    case Method::msp:
      c.request_logprobs = true;
      break;
    case Method::vce_multi:
    case Method::consistency:
      c.regime = Regime::SEP;
      c.M = 5;
      break;
    case Method::cocoa:
    case Method::cocoa_or:
      c.regime = Regime::SEP;
      c.M = 10;
      c.request_logprobs = true;
      c.primary_temperature = 0.2;
      break;
  }
  return c;
}

void validate(const DecodeConfig& cfg, Method method) {
  auto bad = [&](const std::string& why) {
    fail(ErrorCode::ConfigError, std::string(to_string(method)) + ": " + why);
  };
  if (!(cfg.temperature > 0.0)) bad("temperature must be > 0");
  if (cfg.primary_temperature && !(*cfg.primary_temperature > 0.0)) {
    bad("primary temperature must be > 0");
  }
  if (cfg.M < 1) bad("M must be >= 1");
  if (cfg.max_tokens < 1) bad("max_tokens must be >= 1");
  if (cfg.regime == Regime::SINGLE && cfg.M != 1) bad("SINGLE regime implies M = 1");
  switch (method) {
    case Method::vce_single:
    case Method::msp:
      if (cfg.regime != Regime::SINGLE) bad("single-sample method needs the SINGLE regime");
      break;
    case Method::vce_multi:
    case Method::consistency:
      if (cfg.regime == Regime::SINGLE || cfg.M < 2) bad("multi-sample method needs SEP or TOPK with M >= 2");
      break;
    case Method::cocoa:
    case Method::cocoa_or:
      if (cfg.regime != Regime::SEP) bad("cocoa alternatives are always decoded with SEP");
      if (!cfg.primary_temperature) bad("cocoa needs a primary decode");
      if (!cfg.request_logprobs) bad("cocoa needs token logprobs");
      break;
  }
  if (method == Method::msp && !cfg.request_logprobs) bad("msp needs token logprobs");
}

void to_json(json& j, const DecodeConfig& c) {
  j = {{"regime", to_string(c.regime)},
       {"M", c.M},
       {"temperature", c.temperature},
       {"max_tokens", c.max_tokens},
       {"seed_base", c.seed_base ? json(*c.seed_base) : json(nullptr)},
       {"prompt_template", c.prompt_template},
       {"request_logprobs", c.request_logprobs},
       {"extraction", c.extraction == Extraction::verbalized ? "verbalized" : "plain"},
       {"primary_temperature",
        c.primary_temperature ? json(*c.primary_temperature) : json(nullptr)}};
}

void from_json(const json& j, DecodeConfig& c) {
  c.regime = parse_regime(j.at("regime").get<std::string>());
  c.M = j.at("M").get<int>();
  c.temperature = j.at("temperature").get<double>();
  c.max_tokens = j.at("max_tokens").get<int>();
  c.seed_base = j.at("seed_base").is_null() ? std::nullopt
                                            : std::optional(j.at("seed_base").get<std::int64_t>());
  c.prompt_template = j.at("prompt_template").get<std::string>();
  c.request_logprobs = j.at("request_logprobs").get<bool>();
  c.extraction = j.at("extraction").get<std::string>() == "verbalized" ? Extraction::verbalized
                                                                        : Extraction::plain;
  const auto& pt = j.at("primary_temperature");
  c.primary_temperature = pt.is_null() ? std::nullopt : std::optional(pt.get<double>());
}

// ---------------------------------------------------------------------------
// Prompts and extraction

namespace {

void replace_all(std::string& s, std::string_view from, std::string_view to) {
  for (std::size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) {
    s.replace(pos, from.size(), to);
  }
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

std::string PromptTemplate::render(const QueryRecord& q) const {
  std::istringstream in(text);
  std::string out;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (header && !line.empty() && line.front() == '#') continue;
    header = false;
    if (!q.context && line.find("{context}") != std::string::npos) continue;
    replace_all(line, "{question}", q.question);
    replace_all(line, "{context}", q.context.value_or(""));
    out += line;
    out += '\n';
  }
  return trim(out);
}

PromptTemplate load_prompt(const fs::path& dir, Dataset dataset, Method method) {
  const std::string family = extraction_for(method) == Extraction::verbalized ? "vce" : "answer";
  const std::string ds(to_string(dataset));
  for (const std::string& stem :
       {ds + "." + std::string(to_string(method)), ds + "." + family, "default." + family}) {
    const fs::path p = dir / (stem + ".txt");
    if (fs::exists(p)) return PromptTemplate{stem, read_file(p)};
  }
  fail(ErrorCode::MissingPromptTemplate,
       "no template for (" + ds + ", " + std::string(to_string(method)) + ") in " + dir.string());
}

std::string extract_plain_answer(std::string_view raw, Dataset dataset) {
  static const std::regex kAnswer(R"(answer\s*[:=])", std::regex::icase);
  static const std::regex kConfidence(R"(confidence)", std::regex::icase);
  std::string text;
  for (char c : raw) {
    if (c != '*' && c != '`') text.push_back(c);
  }
  std::smatch m;
  std::string segment;
  if (std::regex_search(text, m, kAnswer)) {
    segment = m.suffix().str();
    segment = segment.substr(0, segment.find('\n'));
    std::smatch c;
    if (std::regex_search(segment, c, kConfidence)) segment = segment.substr(0, c.position(0));
  } else if (dataset == Dataset::gsm8k) {
    segment = text;
  } else {
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
      if (!trim(line).empty()) {
        segment = line;
        break;
      }
    }
  }
  static constexpr std::string_view kEdge = " \t\r\n.,;:-\"'";
  const auto b = segment.find_first_not_of(kEdge);
  if (b == std::string::npos) return {};
  const auto e = segment.find_last_not_of(kEdge);
  return segment.substr(b, e - b + 1);
}

void finalize_sample(SampleRecord& s, Extraction extraction, Dataset dataset, int max_tokens,
                     std::string_view finish_reason) {
  s.extracted_answer.reset();
  s.verbalized_confidence.reset();
  s.filtered = false;
  s.filter_reason.reset();

  if (trim(s.raw_text).empty()) return s.mark_filtered(FilterReason::empty_output);

  std::size_t words = 0;
  {
    std::istringstream in(s.raw_text);
    std::string w;
    while (in >> w) ++words;
  }
  if (finish_reason == "length" || words > 4 * static_cast<std::size_t>(max_tokens)) {
    return s.mark_filtered(FilterReason::overlong_output);
  }
  if (s.token_logprobs) {
    for (double lp : *s.token_logprobs) {
      if (!(lp <= 0.0)) return s.mark_filtered(FilterReason::malformed_structure);
    }
  }

  std::string answer;
  if (extraction == Extraction::verbalized) {
    auto parsed = vce::parse_verbalized(s.raw_text);
    if (!parsed) return s.mark_filtered(FilterReason::unparseable_confidence);
    answer = parsed->answer;
    s.verbalized_confidence = parsed->confidence;
  } else {
    answer = extract_plain_answer(s.raw_text, dataset);
  }
  if (answer.empty()) return s.mark_filtered(FilterReason::empty_output);
  s.extracted_answer = answer;

  try {
    normalize_answer(answer, dataset);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::AmbiguousYesNo) return s.mark_filtered(FilterReason::malformed_structure);
    if (e.code() == ErrorCode::EmptyAnswer) return s.mark_filtered(FilterReason::empty_output);
    // NoNumberFound stays unfiltered and is judged incorrect downstream.
  }
}

// ---------------------------------------------------------------------------
// Transport

void RateLimiter::acquire() {
  if (rps_ <= 0.0) return;
  std::chrono::steady_clock::time_point slot;
  {
    std::lock_guard lock(mutex_);
    const auto now = std::chrono::steady_clock::now();
    slot = std::max(now, next_);
    next_ = slot + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                       std::chrono::duration<double>(1.0 / rps_));
  }
  std::this_thread::sleep_until(slot);
}

llm::ChatResponse complete_with_retry(llm::LlmClient& client, const llm::ChatRequest& req,
                                      const RetryPolicy& policy, RateLimiter* limiter) {
  std::string last;
  for (int attempt = 1; attempt <= policy.max_attempts; ++attempt) {
    if (limiter) limiter->acquire();
    try {
      return client.complete(req);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::TransportError && e.code() != ErrorCode::RateLimited) throw;
      last = e.what();
      if (attempt == policy.max_attempts) break;
      double wait = std::min(policy.max_backoff_s, policy.backoff_base_s * std::pow(2.0, attempt - 1));
      if (e.code() == ErrorCode::RateLimited && e.retry_after) wait = *e.retry_after;
      spdlog::debug("request attempt {} failed ({}); retrying in {:.3f}s", attempt, last, wait);
      std::this_thread::sleep_for(std::chrono::duration<double>(std::max(0.0, wait)));
    }
  }
  fail(ErrorCode::PersistentFailure,
       "gave up after " + std::to_string(policy.max_attempts) + " attempts: " + last);
}

// ---------------------------------------------------------------------------
// Decoding

namespace {

// One chat-completions call producing `count` records starting at first_index.
struct Task {
  std::size_t query_pos = 0;
  int first_index = 0;
  int count = 1;
  Regime regime = Regime::SINGLE;
  double temperature = 0.7;
  std::optional<std::int64_t> seed;
};

std::vector<Task> plan_tasks(std::size_t query_pos, const DecodeConfig& cfg) {
  std::vector<Task> tasks;
  const std::int64_t base = cfg.seed_base.value_or(0);
  int offset = 0;
  if (cfg.primary_temperature) {
    tasks.push_back({query_pos, 0, 1, Regime::SINGLE, *cfg.primary_temperature, cfg.seed_base});
    offset = 1;
  }
  switch (cfg.regime) {
    case Regime::SINGLE:
      tasks.push_back({query_pos, offset, 1, Regime::SINGLE, cfg.temperature, cfg.seed_base});
      break;
    case Regime::SEP:
      for (int i = 0; i < cfg.M; ++i) {
        tasks.push_back({query_pos, offset + i, 1, Regime::SEP, cfg.temperature, base + i});
      }
      break;
    case Regime::TOPK:
      tasks.push_back({query_pos, offset, cfg.M, Regime::TOPK, cfg.temperature, cfg.seed_base});
      break;
  }
  return tasks;
}

std::vector<SampleRecord> execute(const Task& task, const QueryRecord& q, const DecodeConfig& cfg,
                                  const std::string& prompt_text, llm::LlmClient& client,
                                  const DecodeOptions& options, RateLimiter* limiter) {
  llm::ChatRequest req;
  req.model = options.model_id;
  req.messages = {{"user", prompt_text}};
  req.temperature = task.temperature;
  req.n = task.count;
  req.seed = task.seed;
  req.max_tokens = cfg.max_tokens;
  req.logprobs = cfg.request_logprobs;

  std::vector<SampleRecord> out;
  auto blank = [&](int k) {
    SampleRecord s;
    s.query_id = q.id;
    s.sample_index = task.first_index + k;
    s.regime = task.regime;
    s.temperature = task.temperature;
    s.seed = task.seed;
    return s;
  };

  llm::ChatResponse resp;
  try {
    resp = complete_with_retry(client, req, options.retry, limiter);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::PersistentFailure) throw;
    spdlog::warn("query {}: {}", q.id, e.what());
    for (int k = 0; k < task.count; ++k) {
      out.push_back(blank(k));
      out.back().mark_filtered(FilterReason::malformed_structure);
    }
    return out;
  }

  for (int k = 0; k < task.count; ++k) {
    SampleRecord s = blank(k);
    if (static_cast<std::size_t>(k) >= resp.choices.size()) {
      s.mark_filtered(FilterReason::malformed_structure);
      out.push_back(std::move(s));
      continue;
    }
    const auto& choice = resp.choices[static_cast<std::size_t>(k)];
    s.raw_text = choice.content;
    if (cfg.request_logprobs && choice.logprobs) s.token_logprobs = choice.logprobs;
    finalize_sample(s, cfg.extraction, q.dataset, cfg.max_tokens, choice.finish_reason);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace

std::vector<SampleRecord> decode_query(const QueryRecord& query, const DecodeConfig& cfg,
                                       const PromptTemplate& prompt, llm::LlmClient& client,
                                       const DecodeOptions& options) {
  RateLimiter limiter(options.requests_per_second);
  const std::string text = prompt.render(query);
  std::vector<SampleRecord> out;
  for (const auto& task : plan_tasks(0, cfg)) {
    auto recs = execute(task, query, cfg, text, client, options, &limiter);
    out.insert(out.end(), recs.begin(), recs.end());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Cache

SampleCache::SampleCache(fs::path path) : path_(std::move(path)) {}

std::map<std::pair<std::string, int>, SampleRecord> SampleCache::load() {
  std::lock_guard lock(mutex_);
  std::map<std::pair<std::string, int>, SampleRecord> out;
  if (!fs::exists(path_)) return out;

  const std::string content = read_file(path_);
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < content.size()) {
    const auto nl = content.find('\n', pos);
    ++line_no;
    if (nl == std::string::npos) {
      spdlog::warn("{}: dropping torn trailing line {}", path_.string(), line_no);
      fs::resize_file(path_, pos);
      break;
    }
    const std::string_view line(content.data() + pos, nl - pos);
    pos = nl + 1;
    if (line.empty()) continue;
    SampleRecord rec;
    try {
      rec = json::parse(line).get<SampleRecord>();
      validate(rec);
    } catch (const std::exception& e) {
      fail(ErrorCode::CacheCorrupt,
           path_.string() + " line " + std::to_string(line_no) + ": " + e.what());
    }
    out.try_emplace({rec.query_id, rec.sample_index}, std::move(rec));
  }
  return out;
}

void SampleCache::append(std::span<const SampleRecord> records) {
  std::string block;
  for (const auto& r : records) {
    block += json(r).dump();
    block += '\n';
  }
  std::lock_guard lock(mutex_);
  if (!out_.is_open()) {
    out_.open(path_, std::ios::binary | std::ios::app);
    if (!out_) fail(ErrorCode::ConfigError, "cannot open " + path_.string() + " for writing");
  }
  out_.write(block.data(), static_cast<std::streamsize>(block.size()));
  out_.flush();
}

std::vector<SampleRecord> read_samples(const fs::path& path) {
  if (!fs::exists(path)) fail(ErrorCode::CacheCorrupt, path.string() + " does not exist");
  SampleCache cache(path);
  std::vector<SampleRecord> out;
  for (auto& [key, rec] : cache.load()) out.push_back(std::move(rec));
  return out;
}

// ---------------------------------------------------------------------------
// Manifest

void to_json(json& j, const RunManifest& m) {
  j = {{"run_id", m.run_id},
       {"model_id", m.model_id},
       {"dataset", m.dataset},
       {"method", m.method},
       {"decode", m.decode},
       {"n_requested", m.n_requested},
       {"n_effective", m.n_effective},
       {"filter_counts", m.filter_counts},
       {"sample_filter_counts", m.sample_filter_counts},
       {"normalizer", m.normalizer ? json(*m.normalizer) : json(nullptr)},
       {"started", m.started},
       {"finished", m.finished},
       {"config_hash", m.config_hash},
       {"scoring", m.scoring},
       {"subsample", m.subsample}};
}

void from_json(const json& j, RunManifest& m) {
  m.run_id = j.at("run_id").get<std::string>();
  m.model_id = j.at("model_id").get<std::string>();
  m.dataset = j.at("dataset").get<std::string>();
  m.method = j.at("method").get<std::string>();
  m.decode = j.at("decode").get<DecodeConfig>();
  m.n_requested = j.at("n_requested").get<int>();
  m.n_effective = j.value("n_effective", 0);
  m.filter_counts = j.value("filter_counts", std::map<std::string, int>{});
  m.sample_filter_counts = j.value("sample_filter_counts", std::map<std::string, int>{});
  if (auto it = j.find("normalizer"); it != j.end() && !it->is_null()) {
    m.normalizer = it->get<msp::NormalizationStats>();
  } else {
    m.normalizer.reset();
  }
  m.started = j.value("started", "");
  m.finished = j.value("finished", "");
  m.config_hash = j.at("config_hash").get<std::string>();
  m.scoring = j.value("scoring", json::object());
  m.subsample = j.contains("subsample") ? j.at("subsample") : json();
}

RunManifest read_manifest(const fs::path& path) {
  try {
    return json::parse(read_file(path)).get<RunManifest>();
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    fail(ErrorCode::CacheCorrupt, path.string() + ": " + e.what());
  }
}

void write_manifest(const fs::path& path, const RunManifest& m) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << json(m).dump(2) << '\n';
  }
  fs::rename(tmp, path);
}

std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// ---------------------------------------------------------------------------
// Dataset runs

RunResult run_dataset(std::span<const QueryRecord> queries, const RunManifest& manifest_template,
                      const PromptTemplate& prompt, llm::LlmClient* client, const fs::path& run_dir,
                      const RunOptions& options) {
  fs::create_directories(run_dir);
  const fs::path samples_path = run_dir / "samples.jsonl";
  const fs::path manifest_path = run_dir / "manifest.json";
  const DecodeConfig& cfg = manifest_template.decode;

  if (options.rebuild) {
    fs::remove(samples_path);
    fs::remove(manifest_path);
  }
  const bool have_cache = fs::exists(samples_path);
  if (have_cache) {
    if (!options.resume) {
      fail(ErrorCode::ConfigError,
           run_dir.string() + " already holds samples; pass --resume to continue or --rebuild to start over");
    }
    if (!fs::exists(manifest_path)) {
      fail(ErrorCode::CacheCorrupt, "samples.jsonl exists without manifest.json in " + run_dir.string());
    }
    const auto existing = read_manifest(manifest_path);
    if (existing.config_hash != manifest_template.config_hash) {
      fail(ErrorCode::CacheConflict, "cached run has config hash " + existing.config_hash +
                                         ", current config hashes to " +
                                         manifest_template.config_hash + "; pass --rebuild");
    }
  }

  RunResult result;
  result.manifest = manifest_template;
  result.manifest.n_requested = static_cast<int>(queries.size());
  if (result.manifest.started.empty()) result.manifest.started = utc_timestamp();
  write_manifest(manifest_path, result.manifest);

  SampleCache cache(samples_path);
  auto cached = cache.load();

  std::vector<Task> todo;
  std::vector<std::string> prompts(queries.size());
  for (std::size_t qi = 0; qi < queries.size(); ++qi) {
    for (const auto& task : plan_tasks(qi, cfg)) {
      bool complete = true;
      for (int k = 0; k < task.count && complete; ++k) {
        complete = cached.count({queries[qi].id, task.first_index + k}) > 0;
      }
      if (complete) {
        ++result.tasks_from_cache;
      } else {
        if (prompts[qi].empty()) prompts[qi] = prompt.render(queries[qi]);
        todo.push_back(task);
      }
    }
  }

  if (!todo.empty()) {
    if (options.offline || client == nullptr) {
      fail(ErrorCode::BackendUnavailable,
           std::to_string(todo.size()) + " decode requests missing from the cache in offline mode");
    }
    spdlog::info("decoding {} requests ({} served from cache)", todo.size(), result.tasks_from_cache);

    RateLimiter limiter(options.decode.requests_per_second);
    std::atomic<std::size_t> next{0};
    std::atomic<bool> stop{false};
    std::atomic<int> issued{0};
    std::mutex err_mutex;
    std::exception_ptr first_error;
    std::mutex fresh_mutex;
    std::vector<SampleRecord> fresh;

    auto worker = [&] {
      while (!stop.load()) {
        const std::size_t i = next.fetch_add(1);
        if (i >= todo.size()) return;
        const Task& task = todo[i];
        try {
          issued.fetch_add(1);
          auto recs = execute(task, queries[task.query_pos], cfg, prompts[task.query_pos], *client,
                              options.decode, &limiter);
          cache.append(recs);
          std::lock_guard lock(fresh_mutex);
          fresh.insert(fresh.end(), recs.begin(), recs.end());
        } catch (...) {
          std::lock_guard lock(err_mutex);
          if (!first_error) first_error = std::current_exception();
          stop.store(true);
        }
      }
    };
    {
      const int n_workers =
          std::max(1, std::min<int>(options.decode.parallelism, static_cast<int>(todo.size())));
      std::vector<std::jthread> pool;
      for (int w = 0; w < n_workers; ++w) pool.emplace_back(worker);
    }
    result.requests_issued = issued.load();
    if (first_error) std::rethrow_exception(first_error);
    for (auto& r : fresh) cached.try_emplace({r.query_id, r.sample_index}, std::move(r));
  }

  for (const auto& q : queries) {
    for (int idx = 0; idx < cfg.total_samples(); ++idx) {
      auto it = cached.find({q.id, idx});
      if (it == cached.end()) {
        fail(ErrorCode::CacheCorrupt, "missing sample " + q.id + "#" + std::to_string(idx));
      }
      result.samples.push_back(it->second);
    }
  }
  result.manifest.sample_filter_counts.clear();
  for (const auto& s : result.samples) {
    if (s.filter_reason) ++result.manifest.sample_filter_counts[std::string(to_string(*s.filter_reason))];
  }
  write_manifest(manifest_path, result.manifest);
  return result;
}

}  // namespace uqgate::orchestrator
