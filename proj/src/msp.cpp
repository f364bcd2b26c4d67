#include "uqgate/msp.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "uqgate/error.hpp"

namespace uqgate::msp {

double sequence_nll(std::span<const double> token_logprobs) {
  if (token_logprobs.empty()) fail(ErrorCode::EmptyLogprobs, "no token logprobs");
  double sum = 0.0;
  for (double lp : token_logprobs) {
    if (!(lp <= 0.0)) fail(ErrorCode::PositiveLogprob, "logprob " + std::to_string(lp) + " > 0");
    sum += lp;
  }
  return sum == 0.0 ? 0.0 : -sum;
}

double percentile(std::span<const double> values, double p) {
  if (values.empty()) fail(ErrorCode::TooFewValues, "percentile of an empty set");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= sorted.size()) return sorted.back();
  const double frac = h - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

NormalizationStats fit_normalizer(std::span<const double> u_values, double clip_percentile) {
  if (u_values.size() < 2) {
    fail(ErrorCode::TooFewValues,
         "normalizer needs >= 2 values, got " + std::to_string(u_values.size()));
  }
  if (!(clip_percentile > 0.0 && clip_percentile <= 1.0)) {
    fail(ErrorCode::ConfigError, "clip percentile must lie in (0, 1]");
  }
  for (double u : u_values) {
    if (!std::isfinite(u)) fail(ErrorCode::TooFewValues, "non-finite uncertainty value");
  }

  NormalizationStats stats;
  stats.clip_percentile = clip_percentile;
  stats.q98 = percentile(u_values, clip_percentile);
  // Minimum of the clipped values min(u, q98).
  double lo = stats.q98;
  for (double u : u_values) lo = std::min(lo, std::min(u, stats.q98));
  stats.min_u = lo;
  stats.n_fitted = static_cast<int>(u_values.size());
  return stats;
}

double to_confidence(double u, const NormalizationStats& stats) {
  const double range = stats.q98 - stats.min_u;
  if (!(range > 0.0)) return 1.0;
  const double clipped = std::min(u, stats.q98);
  const double c = 1.0 - (clipped - stats.min_u) / range;
  return std::clamp(c, 0.0, 1.0);
}

UncertaintyScore msp_score(const SampleRecord& sample, const NormalizationStats& stats) {
  if (!sample.token_logprobs) {
    fail(ErrorCode::MissingLogprobs,
         "sample " + sample.query_id + " has no token logprobs; the endpoint did not return them");
  }
  const double u = sequence_nll(*sample.token_logprobs);
  UncertaintyScore score;
  score.query_id = sample.query_id;
  score.method = Method::msp;
  score.confidence = to_confidence(u, stats);
  score.raw_uncertainty = u;
  score.chosen_answer = sample.extracted_answer.value_or("");
  return score;
}

void to_json(nlohmann::json& j, const NormalizationStats& s) {
  j = {{"min_u", s.min_u},
       {"q98", s.q98},
       {"clip_percentile", s.clip_percentile},
       {"n_fitted", s.n_fitted}};
}

void from_json(const nlohmann::json& j, NormalizationStats& s) {
  s.min_u = j.at("min_u").get<double>();
  s.q98 = j.at("q98").get<double>();
  s.clip_percentile = j.at("clip_percentile").get<double>();
  s.n_fitted = j.at("n_fitted").get<int>();
}

}  // namespace uqgate::msp
