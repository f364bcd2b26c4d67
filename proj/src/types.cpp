#include "uqgate/types.hpp"

#include <algorithm>
#include <array>
#include <utility>

#include "uqgate/error.hpp"

namespace uqgate {

namespace {

template <typename E, std::size_t N>
using NameTable = std::array<std::pair<E, std::string_view>, N>;

constexpr NameTable<Dataset, 5> kDatasetNames{{{Dataset::boolq, "boolq"},
                                               {Dataset::squad2, "squad2"},
                                               {Dataset::triviaqa, "triviaqa"},
                                               {Dataset::gsm8k, "gsm8k"},
                                               {Dataset::custom, "custom"}}};
constexpr NameTable<Regime, 3> kRegimeNames{
    {{Regime::SINGLE, "SINGLE"}, {Regime::SEP, "SEP"}, {Regime::TOPK, "TOPK"}}};
constexpr NameTable<FilterReason, 4> kFilterNames{
    {{FilterReason::unparseable_confidence, "unparseable_confidence"},
     {FilterReason::empty_output, "empty_output"},
     {FilterReason::overlong_output, "overlong_output"},
     {FilterReason::malformed_structure, "malformed_structure"}}};
constexpr NameTable<Method, 6> kMethodNames{{{Method::vce_single, "vce_single"},
                                             {Method::vce_multi, "vce_multi"},
                                             {Method::msp, "msp"},
                                             {Method::consistency, "consistency"},
                                             {Method::cocoa, "cocoa"},
                                             {Method::cocoa_or, "cocoa_or"}}};
constexpr NameTable<MatchRule, 4> kRuleNames{{{MatchRule::yesno, "yesno"},
                                              {MatchRule::normalized_exact, "normalized_exact"},
                                              {MatchRule::alias_containment, "alias_containment"},
                                              {MatchRule::numeric, "numeric"}}};

template <typename E, std::size_t N>
std::string_view name_of(const NameTable<E, N>& table, E value) {
  for (const auto& [e, name] : table) {
    if (e == value) return name;
  }
  return "unknown";
}

template <typename E, std::size_t N>
E parse_name(const NameTable<E, N>& table, std::string_view s, std::string_view what) {
  for (const auto& [e, name] : table) {
    if (name == s) return e;
  }
  fail(ErrorCode::ConfigError, "unknown " + std::string(what) + " '" + std::string(s) + "'");
}

template <typename T>
std::optional<T> optional_field(const nlohmann::json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return it->get<T>();
}

template <typename T>
void put_optional(nlohmann::json& j, const char* key, const std::optional<T>& v) {
  if (v) {
    j[key] = *v;
  } else {
    j[key] = nullptr;
  }
}

}  // namespace

std::string_view to_string(Dataset v) { return name_of(kDatasetNames, v); }
std::string_view to_string(Regime v) { return name_of(kRegimeNames, v); }
std::string_view to_string(FilterReason v) { return name_of(kFilterNames, v); }
std::string_view to_string(Method v) { return name_of(kMethodNames, v); }
std::string_view to_string(MatchRule v) { return name_of(kRuleNames, v); }

Dataset parse_dataset(std::string_view s) { return parse_name(kDatasetNames, s, "dataset"); }
Regime parse_regime(std::string_view s) { return parse_name(kRegimeNames, s, "regime"); }
FilterReason parse_filter_reason(std::string_view s) {
  return parse_name(kFilterNames, s, "filter reason");
}
Method parse_method(std::string_view s) { return parse_name(kMethodNames, s, "method"); }
MatchRule parse_match_rule(std::string_view s) { return parse_name(kRuleNames, s, "match rule"); }

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::EmptyAnswer: return "EmptyAnswer";
    case ErrorCode::NoNumberFound: return "NoNumberFound";
    case ErrorCode::AmbiguousYesNo: return "AmbiguousYesNo";
    case ErrorCode::InvalidRecord: return "InvalidRecord";
    case ErrorCode::MissingConfidence: return "MissingConfidence";
    case ErrorCode::AllFiltered: return "AllFiltered";
    case ErrorCode::AllZeroConfidence: return "AllZeroConfidence";
    case ErrorCode::EmptyLogprobs: return "EmptyLogprobs";
    case ErrorCode::PositiveLogprob: return "PositiveLogprob";
    case ErrorCode::TooFewValues: return "TooFewValues";
    case ErrorCode::MissingLogprobs: return "MissingLogprobs";
    case ErrorCode::MissingStats: return "MissingStats";
    case ErrorCode::TooFewAlternatives: return "TooFewAlternatives";
    case ErrorCode::BackendUnavailable: return "BackendUnavailable";
    case ErrorCode::BatchShapeMismatch: return "BatchShapeMismatch";
    case ErrorCode::SidecarDown: return "SidecarDown";
    case ErrorCode::ScoreOutOfRange: return "ScoreOutOfRange";
    case ErrorCode::InvalidRequest: return "InvalidRequest";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::TransportError: return "TransportError";
    case ErrorCode::RateLimited: return "RateLimited";
    case ErrorCode::ApiError: return "ApiError";
    case ErrorCode::MultiCompletionRejected: return "MultiCompletionRejected";
    case ErrorCode::PersistentFailure: return "PersistentFailure";
    case ErrorCode::MissingPromptTemplate: return "MissingPromptTemplate";
    case ErrorCode::CacheCorrupt: return "CacheCorrupt";
    case ErrorCode::CacheConflict: return "CacheConflict";
    case ErrorCode::SchemaMismatch: return "SchemaMismatch";
    case ErrorCode::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

void validate(const QueryRecord& q) {
  if (q.id.empty()) fail(ErrorCode::InvalidRecord, "query id is empty");
  if (q.answerable && q.gold_answers.empty()) {
    fail(ErrorCode::InvalidRecord, "answerable query '" + q.id + "' has no gold answers");
  }
}

void validate(const SampleRecord& s) {
  if (s.sample_index < 0) fail(ErrorCode::InvalidRecord, "negative sample_index");
  if (!(s.temperature > 0.0)) fail(ErrorCode::InvalidRecord, "temperature must be > 0");
  if (s.filtered != s.filter_reason.has_value()) {
    fail(ErrorCode::InvalidRecord, "filtered flag and filter_reason disagree for '" + s.query_id + "'");
  }
  if (s.verbalized_confidence &&
      (*s.verbalized_confidence < 0.0 || *s.verbalized_confidence > 100.0)) {
    fail(ErrorCode::InvalidRecord, "verbalized_confidence outside [0,100]");
  }
  if (s.token_logprobs) {
    for (double lp : *s.token_logprobs) {
      if (!(lp <= 0.0)) fail(ErrorCode::InvalidRecord, "token logprob > 0 or NaN");
    }
  }
}

void validate(const UncertaintyScore& s) {
  if (!(s.confidence >= 0.0 && s.confidence <= 1.0)) {
    fail(ErrorCode::InvalidRecord, "confidence outside [0,1] for '" + s.query_id + "'");
  }
  const bool fused = s.method == Method::cocoa || s.method == Method::cocoa_or;
  if (fused != s.components.has_value()) {
    fail(ErrorCode::InvalidRecord, "components must be present exactly for cocoa methods");
  }
}

void to_json(nlohmann::json& j, const QueryRecord& q) {
  j = nlohmann::json::object();
  j["id"] = q.id;
  j["dataset"] = to_string(q.dataset);
  j["question"] = q.question;
  put_optional(j, "context", q.context);
  j["gold_answers"] = q.gold_answers;
  j["answerable"] = q.answerable;
  j["meta"] = q.meta;
}

void from_json(const nlohmann::json& j, QueryRecord& q) {
  q.id = j.at("id").get<std::string>();
  q.dataset = parse_dataset(j.at("dataset").get<std::string>());
  q.question = j.at("question").get<std::string>();
  q.context = optional_field<std::string>(j, "context");
  q.gold_answers = j.at("gold_answers").get<std::vector<std::string>>();
  q.answerable = j.value("answerable", true);
  q.meta = j.value("meta", std::map<std::string, std::string>{});
}

void to_json(nlohmann::json& j, const SampleRecord& s) {
  j = nlohmann::json::object();
  j["query_id"] = s.query_id;
  j["sample_index"] = s.sample_index;
  j["regime"] = to_string(s.regime);
  j["temperature"] = s.temperature;
  put_optional(j, "seed", s.seed);
  j["raw_text"] = s.raw_text;
  put_optional(j, "extracted_answer", s.extracted_answer);
  put_optional(j, "verbalized_confidence", s.verbalized_confidence);
  put_optional(j, "token_logprobs", s.token_logprobs);
  j["filtered"] = s.filtered;
  if (s.filter_reason) {
    j["filter_reason"] = to_string(*s.filter_reason);
  } else {
    j["filter_reason"] = nullptr;
  }
}

void from_json(const nlohmann::json& j, SampleRecord& s) {
  s.query_id = j.at("query_id").get<std::string>();
  s.sample_index = j.at("sample_index").get<int>();
  s.regime = parse_regime(j.at("regime").get<std::string>());
  s.temperature = j.at("temperature").get<double>();
  s.seed = optional_field<std::int64_t>(j, "seed");
  s.raw_text = j.at("raw_text").get<std::string>();
  s.extracted_answer = optional_field<std::string>(j, "extracted_answer");
  s.verbalized_confidence = optional_field<double>(j, "verbalized_confidence");
  s.token_logprobs = optional_field<std::vector<double>>(j, "token_logprobs");
  s.filtered = j.at("filtered").get<bool>();
  auto reason = optional_field<std::string>(j, "filter_reason");
  s.filter_reason = reason ? std::optional(parse_filter_reason(*reason)) : std::nullopt;
}

void to_json(nlohmann::json& j, const UncertaintyScore& s) {
  j = nlohmann::json::object();
  j["query_id"] = s.query_id;
  j["method"] = to_string(s.method);
  j["confidence"] = s.confidence;
  put_optional(j, "raw_uncertainty", s.raw_uncertainty);
  if (s.components) {
    j["components"] = {{"u", s.components->u}, {"u_cons", s.components->u_cons}};
  } else {
    j["components"] = nullptr;
  }
  j["chosen_answer"] = s.chosen_answer;
  j["correct"] = s.correct;
  put_optional(j, "judge_flag", s.judge_flag);
}

void from_json(const nlohmann::json& j, UncertaintyScore& s) {
  s.query_id = j.at("query_id").get<std::string>();
  s.method = parse_method(j.at("method").get<std::string>());
  s.confidence = j.at("confidence").get<double>();
  s.raw_uncertainty = optional_field<double>(j, "raw_uncertainty");
  if (auto it = j.find("components"); it != j.end() && !it->is_null()) {
    s.components = CocoaParts{it->at("u").get<double>(), it->at("u_cons").get<double>()};
  } else {
    s.components.reset();
  }
  s.chosen_answer = j.at("chosen_answer").get<std::string>();
  s.correct = j.at("correct").get<bool>();
  s.judge_flag = optional_field<std::string>(j, "judge_flag");
}

}  // namespace uqgate
