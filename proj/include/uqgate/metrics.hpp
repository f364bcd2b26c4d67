#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "uqgate/types.hpp"

namespace uqgate::metrics {

struct ScoredPrediction {
  double confidence = 0.0;
  bool correct = false;
};

std::vector<ScoredPrediction> predictions_of(std::span<const UncertaintyScore> scores);

struct Bin {
  double lo = 0.0;
  double hi = 0.0;
  int count = 0;
  double mean_confidence = 0.0;  // 0 for empty bins
  double accuracy = 0.0;         // 0 for empty bins
};

struct ReliabilityBins {
  int bin_count = 10;
  std::vector<Bin> bins;
};

struct EceResult {
  double ece = 0.0;
  ReliabilityBins bins;
};

/// Expected calibration error over `bin_count` equal-width bins [b/B, (b+1)/B),
/// with 1.0 falling into the last bin.
EceResult compute_ece(std::span<const ScoredPrediction> scores, int bin_count = 10);

// Bin index for a confidence in [0, 1], consistent with the bin edges b / B.
int bin_index(double confidence, int bin_count);

/// Mann-Whitney AUROC: P(conf_correct > conf_incorrect) + 0.5 * P(tie).
/// nullopt when only one class is present.
std::optional<double> compute_auroc(std::span<const ScoredPrediction> scores);

struct SelectiveRow {
  double threshold = 0.0;
  double coverage = 0.0;
  std::optional<double> filtered_accuracy;  // absent when nothing is kept
  int kept = 0;
  int total = 0;
};

/// Keeps predictions with confidence strictly greater than `threshold`.
SelectiveRow selective_prediction(std::span<const ScoredPrediction> scores, double threshold);

struct EvaluationReport {
  std::string dataset;
  std::string method;
  int n_effective = 0;
  double accuracy = 0.0;
  double avg_confidence = 0.0;
  double ece = 0.0;
  std::optional<double> auroc;
  double overconfidence = 0.0;
  ReliabilityBins bins;
  std::vector<SelectiveRow> selective;
  int judge_flags = 0;
};

EvaluationReport evaluate(std::span<const UncertaintyScore> scores, const std::string& dataset,
                          const std::string& method, std::span<const double> thresholds,
                          int bin_count = 10);

struct SweepRow {
  double temperature = 0.0;
  double accuracy = 0.0;
  double ece = 0.0;
  std::optional<double> auroc;
  double overconfidence = 0.0;
  int n_effective = 0;
};

/// One row per temperature, ascending. Needs >= 2 temperatures.
std::vector<SweepRow> sweep_aggregate(const std::map<double, EvaluationReport>& reports);

void to_json(nlohmann::json& j, const EvaluationReport& r);
void from_json(const nlohmann::json& j, EvaluationReport& r);

// CSV columns: lo,hi,count,mean_conf,acc
std::string bins_csv(const ReliabilityBins& bins);
// CSV columns: T,acc,ece,auroc,overconf
std::string sweep_csv(std::span<const SweepRow> rows);

// Shortest round-trip decimal form used in CSV output.
std::string format_double(double v);

}  // namespace uqgate::metrics
