#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "uqgate/types.hpp"

namespace uqgate {

inline constexpr double kNumericTolerance = 1e-6;

/// Canonical form of an answer for comparison.
///
/// Generic datasets: lowercase, punctuation removed, articles (a/an/the) removed,
/// whitespace collapsed. gsm8k: the last number in the text with commas and
/// currency removed, printed in shortest fixed notation. boolq: "yes"/"no" when
/// affirmation or negation cues dominate, otherwise the generic form.
///
/// Throws Error with EmptyAnswer, NoNumberFound (gsm8k) or AmbiguousYesNo (boolq
/// answer with as many yes-cues as no-cues).
std::string normalize_answer(std::string_view text, Dataset dataset);

// Generic normalization only; never consults dataset rules.
std::string normalize_text(std::string_view text);

std::string trim(std::string_view s);

struct JudgeOptions {
  // Unset means the dataset default: on for triviaqa, off elsewhere.
  std::optional<bool> containment;
};

struct JudgeResult {
  bool correct = false;
  CorrectnessJudgment judgment;
};

bool containment_enabled(Dataset dataset, const JudgeOptions& options);

/// Compares `answer` against every gold alias of `query`. Normalization errors on
/// the answer propagate; gold aliases that cannot be normalized are skipped.
JudgeResult judge_correct(std::string_view answer, const QueryRecord& query,
                          const JudgeOptions& options = {});

}  // namespace uqgate
