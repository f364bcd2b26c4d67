#include "uqgate/answer.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <regex>
#include <sstream>
#include <vector>

#include "uqgate/error.hpp"

namespace uqgate {

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

std::vector<std::string> split_ws(std::string_view s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (is_space(c)) {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::string join(const std::vector<std::string>& tokens) {
  std::string out;
  for (const auto& t : tokens) {
    if (!out.empty()) out.push_back(' ');
    out += t;
  }
  return out;
}

std::string lower_ascii(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string format_number(double v) {
  if (v == 0.0) v = 0.0;  // folds -0
  char buf[400];
  auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed);
  return std::string(buf, res.ptr);
}

std::optional<double> parse_number(std::string_view s) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size() || !std::isfinite(v)) {
    return std::nullopt;
  }
  return v;
}

std::string normalize_numeric(const std::string& text) {
  static const std::regex kNumber(R"(-?\$?\d[\d,]*(?:\.\d+)?)");
  std::string last;
  for (auto it = std::sregex_iterator(text.begin(), text.end(), kNumber);
       it != std::sregex_iterator(); ++it) {
    last = it->str();
  }
  if (last.empty()) fail(ErrorCode::NoNumberFound, "no number in '" + text + "'");
  std::string digits;
  for (char c : last) {
    if (c != ',' && c != '$') digits.push_back(c);
  }
  auto v = parse_number(digits);
  if (!v) fail(ErrorCode::NoNumberFound, "unparseable number '" + last + "'");
  return format_number(*v);
}

std::string normalize_yesno(const std::string& text) {
  static const char* const kYes[] = {"yes", "true", "yeah", "yep", "correct"};
  static const char* const kNo[] = {"no", "false", "nope", "incorrect"};
  std::string spaced = lower_ascii(text);
  for (char& c : spaced) {
    if (std::ispunct(static_cast<unsigned char>(c))) c = ' ';
  }
  int yes = 0;
  int no = 0;
  for (const auto& tok : split_ws(spaced)) {
    yes += static_cast<int>(std::count(std::begin(kYes), std::end(kYes), tok));
    no += static_cast<int>(std::count(std::begin(kNo), std::end(kNo), tok));
  }
  if (yes > no) return "yes";
  if (no > yes) return "no";
  if (yes > 0) fail(ErrorCode::AmbiguousYesNo, "equal yes/no cues in '" + text + "'");
  return normalize_text(text);
}

bool contains_tokens(const std::vector<std::string>& hay, const std::vector<std::string>& needle) {
  if (needle.empty() || needle.size() > hay.size()) return false;
  return std::search(hay.begin(), hay.end(), needle.begin(), needle.end()) != hay.end();
}

}  // namespace

std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && is_space(s[b])) ++b;
  while (e > b && is_space(s[e - 1])) --e;
  return std::string(s.substr(b, e - b));
}

std::string normalize_text(std::string_view text) {
  std::string stripped;
  stripped.reserve(text.size());
  for (char c : lower_ascii(text)) {
    if (!std::ispunct(static_cast<unsigned char>(c))) stripped.push_back(c);
  }
  std::vector<std::string> kept;
  for (auto& tok : split_ws(stripped)) {
    if (tok != "a" && tok != "an" && tok != "the") kept.push_back(std::move(tok));
  }
  std::string out = join(kept);
  if (out.empty()) {
    fail(ErrorCode::EmptyAnswer, "nothing left after normalizing '" + std::string(text) + "'");
  }
  return out;
}

std::string normalize_answer(std::string_view text, Dataset dataset) {
  std::string t = trim(text);
  if (t.empty()) fail(ErrorCode::EmptyAnswer, "answer is empty");
  switch (dataset) {
    case Dataset::gsm8k: return normalize_numeric(t);
    case Dataset::boolq: return normalize_yesno(t);
    default: return normalize_text(t);
  }
}

bool containment_enabled(Dataset dataset, const JudgeOptions& options) {
  return options.containment.value_or(dataset == Dataset::triviaqa);
}

JudgeResult judge_correct(std::string_view answer, const QueryRecord& query,
                          const JudgeOptions& options) {
  const std::string norm = normalize_answer(answer, query.dataset);

  JudgeResult result;
  result.judgment.query_id = query.id;
  result.judgment.rule = query.dataset == Dataset::boolq   ? MatchRule::yesno
                         : query.dataset == Dataset::gsm8k ? MatchRule::numeric
                                                           : MatchRule::normalized_exact;

  std::vector<std::pair<std::string, std::string>> golds;  // (alias, normalized)
  for (const auto& alias : query.gold_answers) {
    try {
      golds.emplace_back(alias, normalize_answer(alias, query.dataset));
    } catch (const Error&) {
      // unusable alias
    }
  }

  auto accept = [&](const std::string& alias, MatchRule rule) {
    result.correct = true;
    result.judgment.matched_alias = alias;
    result.judgment.rule = rule;
    return result;
  };

  if (query.dataset == Dataset::gsm8k) {
    const double a = *parse_number(norm);
    for (const auto& [alias, g] : golds) {
      if (std::fabs(a - *parse_number(g)) <= kNumericTolerance) {
        return accept(alias, MatchRule::numeric);
      }
    }
    return result;
  }

  for (const auto& [alias, g] : golds) {
    if (g == norm) return accept(alias, result.judgment.rule);
  }
  if (query.dataset != Dataset::boolq && containment_enabled(query.dataset, options)) {
    const auto answer_tokens = split_ws(norm);
    for (const auto& [alias, g] : golds) {
      if (contains_tokens(answer_tokens, split_ws(g))) {
        return accept(alias, MatchRule::alias_containment);
      }
    }
  }
  return result;
}

}  // namespace uqgate
