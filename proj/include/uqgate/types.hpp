#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace uqgate {

enum class Dataset { boolq, squad2, triviaqa, gsm8k, custom };
enum class Regime { SINGLE, SEP, TOPK };
enum class FilterReason { unparseable_confidence, empty_output, overlong_output, malformed_structure };
enum class Method { vce_single, vce_multi, msp, consistency, cocoa, cocoa_or };
enum class MatchRule { yesno, normalized_exact, alias_containment, numeric };

std::string_view to_string(Dataset v);
std::string_view to_string(Regime v);
std::string_view to_string(FilterReason v);
std::string_view to_string(Method v);
std::string_view to_string(MatchRule v);

// Parsers throw Error(ConfigError) on unknown names.
Dataset parse_dataset(std::string_view s);
Regime parse_regime(std::string_view s);
FilterReason parse_filter_reason(std::string_view s);
Method parse_method(std::string_view s);
MatchRule parse_match_rule(std::string_view s);

inline constexpr FilterReason kAllFilterReasons[] = {
    FilterReason::unparseable_confidence, FilterReason::empty_output,
    FilterReason::overlong_output, FilterReason::malformed_structure};

/// One benchmark question.
struct QueryRecord {
  std::string id;
  Dataset dataset = Dataset::custom;
  std::string question;
  std::optional<std::string> context;
  std::vector<std::string> gold_answers;
  bool answerable = true;
  std::map<std::string, std::string> meta;

  bool operator==(const QueryRecord&) const = default;
};

/// One generated answer and everything needed to score it later.
struct SampleRecord {
  std::string query_id;
  int sample_index = 0;
  Regime regime = Regime::SINGLE;
  double temperature = 0.7;
  std::optional<std::int64_t> seed;
  std::string raw_text;
  std::optional<std::string> extracted_answer;
  std::optional<double> verbalized_confidence;
  std::optional<std::vector<double>> token_logprobs;
  bool filtered = false;
  std::optional<FilterReason> filter_reason;

  void mark_filtered(FilterReason reason) {
    filtered = true;
    filter_reason = reason;
  }

  bool operator==(const SampleRecord&) const = default;
};

struct CocoaParts {
  double u = 0.0;
  double u_cons = 0.0;
  bool operator==(const CocoaParts&) const = default;
};

/// Per-query output of one estimator.
struct UncertaintyScore {
  std::string query_id;
  Method method = Method::msp;
  double confidence = 0.0;
  std::optional<double> raw_uncertainty;
  std::optional<CocoaParts> components;
  std::string chosen_answer;
  bool correct = false;
  // Set when the chosen answer could not be normalized; the score counts as incorrect.
  std::optional<std::string> judge_flag;

  bool operator==(const UncertaintyScore&) const = default;
};

struct CorrectnessJudgment {
  std::string query_id;
  std::optional<std::string> matched_alias;
  MatchRule rule = MatchRule::normalized_exact;
};

// Invariant checks; throw Error(InvalidRecord).
void validate(const QueryRecord& q);
void validate(const SampleRecord& s);
void validate(const UncertaintyScore& s);

void to_json(nlohmann::json& j, const QueryRecord& q);
void from_json(const nlohmann::json& j, QueryRecord& q);
void to_json(nlohmann::json& j, const SampleRecord& s);
void from_json(const nlohmann::json& j, SampleRecord& s);
void to_json(nlohmann::json& j, const UncertaintyScore& s);
void from_json(const nlohmann::json& j, UncertaintyScore& s);

}  // namespace uqgate
