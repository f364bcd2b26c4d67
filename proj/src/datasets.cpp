#include "uqgate/datasets.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "uqgate/answer.hpp"
#include "uqgate/error.hpp"

namespace uqgate::datasets {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

[[noreturn]] void schema_error(std::size_t line, const std::string& what) {
  fail(ErrorCode::SchemaMismatch, "line " + std::to_string(line) + ": " + what);
}

std::string string_field(const json& j, const char* key, std::size_t line) {
  auto it = j.find(key);
  if (it == j.end() || !it->is_string()) schema_error(line, std::string("missing string field '") + key + "'");
  return it->get<std::string>();
}

// Calls fn(line_no, object) for each non-blank JSONL line.
template <typename Fn>
void for_each_jsonl(std::string_view content, Fn&& fn) {
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < content.size()) {
    auto nl = content.find('\n', pos);
    if (nl == std::string_view::npos) nl = content.size();
    ++line_no;
    const std::string line = trim(content.substr(pos, nl - pos));
    pos = nl + 1;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      schema_error(line_no, std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object()) schema_error(line_no, "expected a JSON object");
    fn(line_no, j);
  }
}

bool looks_like_jsonl(std::string_view content) {
  // A whole-file JSON document spans lines; JSONL has one object per line.
  const auto first = content.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return true;
  if (content[first] == '[') return false;
  const auto nl = content.find('\n', first);
  try {
    auto j = json::parse(content.substr(first, nl == std::string_view::npos ? std::string_view::npos : nl - first));
    // A single-line official file still carries its top-level wrapper.
    return j.is_object() && !j.contains("Data") && !j.contains("data");
  } catch (const json::exception&) {
    return false;
  }
}

void add_unique(std::vector<std::string>& out, std::string value) {
  value = trim(value);
  if (value.empty()) return;
  if (std::find(out.begin(), out.end(), value) == out.end()) out.push_back(std::move(value));
}

IngestResult ingest_boolq(std::string_view content) {
  IngestResult res;
  for_each_jsonl(content, [&](std::size_t line, const json& j) {
    QueryRecord q;
    q.dataset = Dataset::boolq;
    q.id = j.contains("id") && j["id"].is_string() ? j["id"].get<std::string>()
                                                  : "boolq-" + std::to_string(line);
    q.question = string_field(j, "question", line);
    if (auto it = j.find("passage"); it != j.end() && it->is_string()) q.context = it->get<std::string>();
    auto ans = j.find("answer");
    if (ans == j.end()) ans = j.find("label");
    if (ans == j.end() || !(ans->is_boolean() || ans->is_number_integer())) {
      schema_error(line, "missing boolean field 'answer'");
    }
    const bool yes = ans->is_boolean() ? ans->get<bool>() : ans->get<int>() != 0;
    q.gold_answers = {yes ? "yes" : "no"};
    res.records.push_back(std::move(q));
  });
  return res;
}

void squad_record(IngestResult& res, std::size_t line, const std::string& id, const std::string& question,
                  const std::optional<std::string>& context, const json& answers, bool impossible) {
  std::vector<std::string> gold;
  if (answers.is_array()) {
    for (const auto& a : answers) {
      if (a.is_object() && a.contains("text")) add_unique(gold, a["text"].get<std::string>());
      else if (a.is_string()) add_unique(gold, a.get<std::string>());
    }
  } else if (answers.is_object() && answers.contains("text")) {
    for (const auto& t : answers["text"]) add_unique(gold, t.get<std::string>());
  } else if (!answers.is_null()) {
    schema_error(line, "unrecognised 'answers' layout");
  }
  if (impossible || gold.empty()) {
    ++res.dropped_unanswerable;
    return;
  }
  QueryRecord q;
  q.dataset = Dataset::squad2;
  q.id = id;
  q.question = question;
  q.context = context;
  q.gold_answers = std::move(gold);
  res.records.push_back(std::move(q));
}

IngestResult ingest_squad2(std::string_view content) {
  IngestResult res;
  if (looks_like_jsonl(content)) {
    for_each_jsonl(content, [&](std::size_t line, const json& j) {
      const std::string id = j.contains("id") ? j["id"].get<std::string>() : "squad2-" + std::to_string(line);
      std::optional<std::string> ctx;
      if (auto it = j.find("context"); it != j.end() && it->is_string()) ctx = it->get<std::string>();
      squad_record(res, line, id, string_field(j, "question", line), ctx, j.value("answers", json()),
                   j.value("is_impossible", false));
    });
  } else {
    json doc;
    try {
      doc = json::parse(content);
    } catch (const json::exception& e) {
      schema_error(1, std::string("invalid JSON: ") + e.what());
    }
    if (!doc.contains("data") || !doc["data"].is_array()) schema_error(1, "missing 'data' array");
    std::size_t index = 0;
    for (const auto& article : doc["data"]) {
      for (const auto& para : article.value("paragraphs", json::array())) {
        const std::string ctx = para.value("context", "");
        for (const auto& qa : para.value("qas", json::array())) {
          ++index;
          if (!qa.contains("question")) schema_error(index, "qa without 'question'");
          squad_record(res, index, qa.value("id", "squad2-" + std::to_string(index)),
                       qa["question"].get<std::string>(), ctx.empty() ? std::nullopt : std::optional(ctx),
                       qa.value("answers", json::array()), qa.value("is_impossible", false));
        }
      }
    }
  }
  if (res.dropped_unanswerable > 0) {
    spdlog::info("squad2: dropped {} unanswerable questions", res.dropped_unanswerable);
  }
  return res;
}

void trivia_record(IngestResult& res, std::size_t line, const std::string& id, const std::string& question,
                   const json& answer) {
  if (!answer.is_object()) schema_error(line, "missing 'answer' object");
  std::vector<std::string> gold;
  for (const char* key : {"Value", "value", "NormalizedValue", "normalized_value"}) {
    if (auto it = answer.find(key); it != answer.end() && it->is_string()) add_unique(gold, it->get<std::string>());
  }
  for (const char* key : {"Aliases", "aliases", "NormalizedAliases", "normalized_aliases"}) {
    if (auto it = answer.find(key); it != answer.end() && it->is_array()) {
      for (const auto& a : *it) add_unique(gold, a.get<std::string>());
    }
  }
  if (gold.empty()) schema_error(line, "answer has no value or aliases");
  QueryRecord q;
  q.dataset = Dataset::triviaqa;
  q.id = id;
  q.question = question;
  q.gold_answers = std::move(gold);
  res.records.push_back(std::move(q));
}

IngestResult ingest_triviaqa(std::string_view content) {
  IngestResult res;
  if (looks_like_jsonl(content)) {
    for_each_jsonl(content, [&](std::size_t line, const json& j) {
      std::string id = "triviaqa-" + std::to_string(line);
      if (auto it = j.find("question_id"); it != j.end() && it->is_string()) id = it->get<std::string>();
      trivia_record(res, line, id, string_field(j, "question", line), j.value("answer", json()));
    });
    return res;
  }
  json doc;
  try {
    doc = json::parse(content);
  } catch (const json::exception& e) {
    schema_error(1, std::string("invalid JSON: ") + e.what());
  }
  if (!doc.contains("Data") || !doc["Data"].is_array()) schema_error(1, "missing 'Data' array");
  std::size_t index = 0;
  for (const auto& item : doc["Data"]) {
    ++index;
    if (!item.contains("Question")) schema_error(index, "entry without 'Question'");
    trivia_record(res, index, item.value("QuestionId", "triviaqa-" + std::to_string(index)),
                  item["Question"].get<std::string>(), item.value("Answer", json()));
  }
  return res;
}

IngestResult ingest_gsm8k(std::string_view content) {
  IngestResult res;
  for_each_jsonl(content, [&](std::size_t line, const json& j) {
    const std::string solution = string_field(j, "answer", line);
    const auto mark = solution.rfind("####");
    if (mark == std::string::npos) schema_error(line, "answer has no '####' delimiter");
    std::string gold;
    for (char c : solution.substr(mark + 4)) {
      if (c != ',') gold.push_back(c);
    }
    gold = trim(gold);
    if (gold.empty()) schema_error(line, "empty final answer after '####'");
    QueryRecord q;
    q.dataset = Dataset::gsm8k;
    q.id = "gsm8k-" + std::to_string(line);
    q.question = string_field(j, "question", line);
    q.gold_answers = {gold};
    res.records.push_back(std::move(q));
  });
  return res;
}

IngestResult ingest_custom(std::string_view content) {
  IngestResult res;
  for_each_jsonl(content, [&](std::size_t line, const json& j) {
    json copy = j;
    if (!copy.contains("dataset")) copy["dataset"] = "custom";
    try {
      res.records.push_back(copy.get<QueryRecord>());
    } catch (const std::exception& e) {
      schema_error(line, e.what());
    }
  });
  return res;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::ConfigError, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

IngestResult ingest_text(std::string_view content, Dataset kind) {
  IngestResult res;
  switch (kind) {
    case Dataset::boolq: res = ingest_boolq(content); break;
    case Dataset::squad2: res = ingest_squad2(content); break;
    case Dataset::triviaqa: res = ingest_triviaqa(content); break;
    case Dataset::gsm8k: res = ingest_gsm8k(content); break;
    case Dataset::custom: res = ingest_custom(content); break;
  }
  std::set<std::string> seen;
  for (std::size_t i = 0; i < res.records.size(); ++i) {
    const auto& q = res.records[i];
    try {
      validate(q);
    } catch (const Error& e) {
      fail(ErrorCode::SchemaMismatch, "record " + std::to_string(i + 1) + ": " + e.what());
    }
    if (!seen.insert(q.id).second) {
      fail(ErrorCode::SchemaMismatch, "record " + std::to_string(i + 1) + ": duplicate id '" + q.id + "'");
    }
  }
  return res;
}

IngestResult ingest_file(const fs::path& path, Dataset kind) {
  return ingest_text(read_file(path), kind);
}

std::vector<QueryRecord> subsample(std::vector<QueryRecord> records, std::size_t n, std::uint64_t seed) {
  if (n >= records.size()) return records;
  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  // Fisher-Yates with an explicit draw so results do not depend on the library's shuffle.
  for (std::size_t i = order.size() - 1; i > 0; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % (i + 1));
    std::swap(order[i], order[j]);
  }
  order.resize(n);
  std::sort(order.begin(), order.end());
  std::vector<QueryRecord> out;
  out.reserve(n);
  for (auto i : order) out.push_back(std::move(records[i]));
  return out;
}

std::vector<QueryRecord> read_queries(const fs::path& path) {
  return ingest_text(read_file(path), Dataset::custom).records;
}

void write_queries(const fs::path& path, const std::vector<QueryRecord>& records) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::ConfigError, "cannot write " + path.string());
    for (const auto& q : records) {
      validate(q);
      out << json(q).dump() << '\n';
    }
  }
  fs::rename(tmp, path);
}

}  // namespace uqgate::datasets
