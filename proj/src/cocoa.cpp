#include "uqgate/cocoa.hpp"

#include <algorithm>

#include "uqgate/error.hpp"

namespace uqgate::cocoa {

std::string_view to_string(FusionMode m) { return m == FusionMode::product ? "product" : "or_rule"; }

double cocoa_dissimilarity(std::string_view star_answer, std::span<const std::string> alternatives,
                           consistency::Backend backend, sim::SimilarityClient* client,
                           const consistency::PairwiseOptions& options) {
  if (alternatives.empty()) fail(ErrorCode::TooFewAlternatives, "need >= 1 alternative answer");
  const auto s = consistency::similarities_to(star_answer, alternatives, backend, client, options);
  double sum = 0.0;
  for (double v : s) sum += 1.0 - v;
  return std::clamp(sum / static_cast<double>(s.size()), 0.0, 1.0);
}

double cocoa_fuse(double u, double u_cons, FusionMode mode, const msp::NormalizationStats* u_stats) {
  if (mode == FusionMode::product) return u * u_cons;
  if (u_stats == nullptr) fail(ErrorCode::MissingStats, "or_rule fusion needs a fitted normalizer for u");
  return std::max(1.0 - msp::to_confidence(u, *u_stats), u_cons);
}

CocoaComponents cocoa_components(const SampleRecord& star, std::span<const SampleRecord> alternatives,
                                 consistency::Backend backend, sim::SimilarityClient* client,
                                 const consistency::PairwiseOptions& options) {
  if (!star.token_logprobs) {
    fail(ErrorCode::MissingLogprobs, "primary answer for " + star.query_id + " has no logprobs");
  }
  std::vector<std::string> alts;
  for (const auto& a : alternatives) {
    if (!a.filtered && a.extracted_answer) alts.push_back(*a.extracted_answer);
  }
  if (alts.empty()) {
    fail(ErrorCode::TooFewAlternatives, "no usable alternatives for " + star.query_id);
  }
  CocoaComponents c;
  c.u = msp::sequence_nll(*star.token_logprobs);
  c.u_cons = cocoa_dissimilarity(star.extracted_answer.value_or(""), alts, backend, client, options);
  c.fused = c.u * c.u_cons;
  return c;
}

UncertaintyScore cocoa_score(const CocoaInput& input, FusionMode mode,
                             const msp::NormalizationStats& stats) {
  UncertaintyScore s;
  s.query_id = input.query_id;
  s.chosen_answer = input.chosen_answer;
  s.components = CocoaParts{input.u, input.u_cons};
  if (mode == FusionMode::product) {
    const double fused = cocoa_fuse(input.u, input.u_cons, mode);
    s.method = Method::cocoa;
    s.raw_uncertainty = fused;
    s.confidence = msp::to_confidence(fused, stats);
  } else {
    const double fused = cocoa_fuse(input.u, input.u_cons, mode, &stats);
    s.method = Method::cocoa_or;
    s.raw_uncertainty = fused;
    s.confidence = std::clamp(1.0 - fused, 0.0, 1.0);
  }
  return s;
}

CocoaRun cocoa_score_run(std::span<const CocoaInput> inputs, FusionMode mode, double clip_percentile) {
  std::vector<double> fit_values;
  fit_values.reserve(inputs.size());
  for (const auto& in : inputs) {
    fit_values.push_back(mode == FusionMode::product ? in.u * in.u_cons : in.u);
  }
  CocoaRun run;
  run.stats = msp::fit_normalizer(fit_values, clip_percentile);
  run.scores.reserve(inputs.size());
  for (const auto& in : inputs) run.scores.push_back(cocoa_score(in, mode, run.stats));
  return run;
}

}  // namespace uqgate::cocoa
