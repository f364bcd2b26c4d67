#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "uqgate/types.hpp"

namespace uqgate::vce {

struct VerbalizedAnswer {
  std::string answer;
  double confidence = 0.0;  // clamped to [0, 100]
};

/// Extracts "Answer: ... Confidence: <n>" style self-reports. Case-insensitive;
/// tolerates markdown emphasis and percent signs. nullopt means no numeric
/// confidence was found, which callers record as unparseable_confidence.
std::optional<VerbalizedAnswer> parse_verbalized(std::string_view raw_text);

/// Single-sample score: the self-report rescaled to [0, 1].
UncertaintyScore vce_single(const SampleRecord& sample);

struct VceAggregate {
  std::string majority_answer;
  double agreeing_mass = 0.0;
  double total_mass = 0.0;
  double confidence = 0.0;
};

/// Agreement-weighted confidence over the unfiltered samples: the confidence
/// mass of samples agreeing with the majority answer divided by the total mass.
/// Answers are compared in normalized form; count ties go to the larger mass,
/// then to the group holding the lowest sample_index.
VceAggregate vce_aggregate(std::span<const SampleRecord> samples, Dataset dataset);

// Comparison key used for majority voting. Falls back to generic normalization
// when the dataset rules reject the answer.
std::string answer_key(std::string_view answer, Dataset dataset);

}  // namespace uqgate::vce
