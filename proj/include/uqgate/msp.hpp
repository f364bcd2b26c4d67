#pragma once

#include <span>

#include <nlohmann/json.hpp>

#include "uqgate/types.hpp"

namespace uqgate::msp {

inline constexpr double kDefaultClipPercentile = 0.98;

/// Clip-and-rescale parameters fitted once over an evaluation set and then frozen.
struct NormalizationStats {
  double min_u = 0.0;
  double q98 = 0.0;  // clip point at clip_percentile
  double clip_percentile = kDefaultClipPercentile;
  int n_fitted = 0;

  bool operator==(const NormalizationStats&) const = default;
};

/// Negative log-likelihood of a generated sequence: -sum of token logprobs.
double sequence_nll(std::span<const double> token_logprobs);

/// Percentile with linear interpolation between order statistics; `values` need not be sorted.
double percentile(std::span<const double> values, double p);

/// Fits the clip point at `clip_percentile` and the minimum of the clipped values.
NormalizationStats fit_normalizer(std::span<const double> u_values,
                                  double clip_percentile = kDefaultClipPercentile);

/// Maps an uncertainty to [0, 1]: clip at q98, then 1 - (u - min) / (q98 - min).
/// Values at or below the fitted minimum map to 1; a degenerate fit maps everything to 1.
double to_confidence(double u, const NormalizationStats& stats);

UncertaintyScore msp_score(const SampleRecord& sample, const NormalizationStats& stats);

void to_json(nlohmann::json& j, const NormalizationStats& s);
void from_json(const nlohmann::json& j, NormalizationStats& s);

}  // namespace uqgate::msp
