#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "uqgate/consistency.hpp"
#include "uqgate/msp.hpp"
#include "uqgate/types.hpp"

namespace uqgate::cocoa {

enum class FusionMode { product, or_rule };

std::string_view to_string(FusionMode m);

/// Mean dissimilarity between the primary answer and its alternatives:
/// (1/M) * sum(1 - s(star, alt_i)).
double cocoa_dissimilarity(std::string_view star_answer, std::span<const std::string> alternatives,
                           consistency::Backend backend, sim::SimilarityClient* client,
                           const consistency::PairwiseOptions& options = {});

/// Fused uncertainty. product: u * u_cons. or_rule: max(1 - C(u), u_cons), where
/// C(u) is `u` mapped through the fitted normalizer so both terms share [0, 1].
double cocoa_fuse(double u, double u_cons, FusionMode mode,
                  const msp::NormalizationStats* u_stats = nullptr);

struct CocoaComponents {
  double u = 0.0;
  double u_cons = 0.0;
  double fused = 0.0;
};

/// Per-query components before run-level normalization. `star` must carry token
/// logprobs; filtered alternatives are skipped and at least one must remain.
CocoaComponents cocoa_components(const SampleRecord& star, std::span<const SampleRecord> alternatives,
                                 consistency::Backend backend, sim::SimilarityClient* client,
                                 const consistency::PairwiseOptions& options = {});

struct CocoaInput {
  std::string query_id;
  std::string chosen_answer;
  double u = 0.0;
  double u_cons = 0.0;
};

struct CocoaRun {
  std::vector<UncertaintyScore> scores;
  // product: fitted over the fused values. or_rule: fitted over u.
  msp::NormalizationStats stats;
};

/// Run-level scoring. product fits the clip-and-rescale normalizer over all fused
/// values and reports confidence = C(fused); or_rule fits it over u and reports
/// confidence = 1 - max(1 - C(u), u_cons).
CocoaRun cocoa_score_run(std::span<const CocoaInput> inputs, FusionMode mode,
                         double clip_percentile = msp::kDefaultClipPercentile);

/// Scores one query against a normalizer that was fitted over the run.
UncertaintyScore cocoa_score(const CocoaInput& input, FusionMode mode,
                             const msp::NormalizationStats& stats);

}  // namespace uqgate::cocoa
