#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "uqgate/answer.hpp"
#include "uqgate/consistency.hpp"
#include "uqgate/msp.hpp"
#include "uqgate/similarity.hpp"
#include "uqgate/types.hpp"

namespace uqgate::pipeline {

struct ScoringOptions {
  Method method = Method::vce_single;
  consistency::Backend backend = consistency::Backend::embedding_cosine;
  consistency::NliSymmetry symmetry = consistency::NliSymmetry::average;
  double clip_percentile = msp::kDefaultClipPercentile;
  // Sample 0 is a separate primary decode and indices 1.. are the regime samples.
  bool has_primary = false;
  JudgeOptions judge;
};

void to_json(nlohmann::json& j, const ScoringOptions& o);
void from_json(const nlohmann::json& j, ScoringOptions& o);

struct ScoringResult {
  std::vector<UncertaintyScore> scores;  // query order, excluded queries omitted
  // Queries that could not be scored, by filter reason.
  std::map<std::string, int> excluded;
  std::optional<msp::NormalizationStats> normalizer;
};

/// Scores every query from its cached samples. A query is excluded (and counted
/// under one filter reason) when the method has nothing usable to score: the
/// primary sample is filtered, too few samples survive, or logprobs are missing.
/// Similarity failures and other errors propagate.
ScoringResult score_queries(std::span<const QueryRecord> queries,
                            std::span<const SampleRecord> samples, const ScoringOptions& options,
                            sim::SimilarityClient* client);

/// The reason a query is excluded when several of its samples were filtered:
/// the most frequent reason, ties going to the earlier reason in declaration order.
FilterReason dominant_reason(std::span<const SampleRecord> samples,
                             FilterReason fallback = FilterReason::malformed_structure);

bool needs_similarity(Method method);

}  // namespace uqgate::pipeline
