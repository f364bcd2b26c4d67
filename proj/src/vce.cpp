#include "uqgate/vce.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <map>
#include <regex>
#include <vector>

#include "uqgate/answer.hpp"
#include "uqgate/error.hpp"

namespace uqgate::vce {

namespace {

std::string strip_markup(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (char c : text) {
    if (c != '*' && c != '`' && c != '_') out.push_back(c);
  }
  return out;
}

std::string strip_edges(const std::string& s) {
  static constexpr std::string_view kEdge = " \t\r\n.,;:-(\"'";
  std::size_t b = s.find_first_not_of(kEdge);
  if (b == std::string::npos) return {};
  std::size_t e = s.find_last_not_of(kEdge);
  return s.substr(b, e - b + 1);
}

}  // namespace

std::optional<VerbalizedAnswer> parse_verbalized(std::string_view raw_text) {
  static const std::regex kConfidence(
      R"(confidence(?:\s+(?:level|score))?\s*(?:\(\s*0\s*(?:-|–|to)\s*100\s*\))?\s*(?:[:=]|is)?\s*(-?\d+(?:\.\d+)?)\s*%?)",
      std::regex::icase);
  static const std::regex kAnswer(R"(answer\s*[:=])", std::regex::icase);

  const std::string text = strip_markup(raw_text);

  std::smatch conf;
  bool found = false;
  for (auto it = std::sregex_iterator(text.begin(), text.end(), kConfidence);
       it != std::sregex_iterator(); ++it) {
    conf = *it;
    found = true;
  }
  if (!found) return std::nullopt;

  const auto conf_pos = static_cast<std::size_t>(conf.position(0));
  const std::string before = text.substr(0, conf_pos);

  std::string segment = before;
  std::smatch ans;
  if (std::regex_search(before, ans, kAnswer)) {
    segment = before.substr(static_cast<std::size_t>(ans.position(0) + ans.length(0)));
  } else if (std::regex_search(text, ans, kAnswer) &&
             static_cast<std::size_t>(ans.position(0)) > conf_pos) {
    // "Confidence: 80. Answer: Paris" ordering
    std::string after = text.substr(static_cast<std::size_t>(ans.position(0) + ans.length(0)));
    segment = after.substr(0, after.find('\n'));
  }

  VerbalizedAnswer out;
  out.answer = strip_edges(segment);
  out.confidence = std::clamp(std::strtod(conf[1].str().c_str(), nullptr), 0.0, 100.0);
  return out;
}

UncertaintyScore vce_single(const SampleRecord& sample) {
  if (sample.filtered || !sample.verbalized_confidence) {
    fail(ErrorCode::MissingConfidence,
         "sample " + sample.query_id + "#" + std::to_string(sample.sample_index) +
             " has no usable verbalized confidence");
  }
  UncertaintyScore score;
  score.query_id = sample.query_id;
  score.method = Method::vce_single;
  score.confidence = *sample.verbalized_confidence / 100.0;
  score.raw_uncertainty = *sample.verbalized_confidence;
  score.chosen_answer = sample.extracted_answer.value_or("");
  return score;
}

std::string answer_key(std::string_view answer, Dataset dataset) {
  try {
    return normalize_answer(answer, dataset);
  } catch (const Error&) {
  }
  try {
    return normalize_text(answer);
  } catch (const Error&) {
  }
  return trim(answer);
}

VceAggregate vce_aggregate(std::span<const SampleRecord> samples, Dataset dataset) {
  struct Group {
    int count = 0;
    double mass = 0.0;
    int first_index = 0;
  };
  // Accumulate in sample_index order so the result does not depend on input order.
  std::vector<const SampleRecord*> ordered;
  for (const auto& s : samples) {
    if (!s.filtered && s.extracted_answer && s.verbalized_confidence) ordered.push_back(&s);
  }
  std::stable_sort(ordered.begin(), ordered.end(), [](const auto* a, const auto* b) {
    return a->sample_index < b->sample_index;
  });

  std::map<std::string, Group> groups;
  double total = 0.0;
  int usable = 0;
  for (const SampleRecord* sp : ordered) {
    const SampleRecord& s = *sp;
    auto [it, inserted] = groups.try_emplace(answer_key(*s.extracted_answer, dataset));
    Group& g = it->second;
    if (inserted || s.sample_index < g.first_index) g.first_index = s.sample_index;
    g.count += 1;
    g.mass += *s.verbalized_confidence;
    total += *s.verbalized_confidence;
    ++usable;
  }
  if (usable < 2) {
    fail(ErrorCode::AllFiltered, "need at least 2 usable samples, have " + std::to_string(usable));
  }
  if (total <= 0.0) fail(ErrorCode::AllZeroConfidence, "all self-reported confidences are 0");

  auto best = groups.begin();
  for (auto it = std::next(groups.begin()); it != groups.end(); ++it) {
    const Group& a = it->second;
    const Group& b = best->second;
    if (a.count != b.count ? a.count > b.count
        : a.mass != b.mass ? a.mass > b.mass
                           : a.first_index < b.first_index) {
      best = it;
    }
  }

  VceAggregate agg;
  agg.majority_answer = best->first;
  agg.agreeing_mass = best->second.mass;
  agg.total_mass = total;
  agg.confidence = agg.agreeing_mass / agg.total_mass;
  return agg;
}

}  // namespace uqgate::vce
