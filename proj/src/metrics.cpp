#include "uqgate/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <sstream>

#include "uqgate/error.hpp"

namespace uqgate::metrics {

using nlohmann::json;

std::vector<ScoredPrediction> predictions_of(std::span<const UncertaintyScore> scores) {
  std::vector<ScoredPrediction> out;
  out.reserve(scores.size());
  for (const auto& s : scores) out.push_back({s.confidence, s.correct});
  return out;
}

namespace {

void check_confidences(std::span<const ScoredPrediction> scores) {
  for (const auto& s : scores) {
    if (!(s.confidence >= 0.0 && s.confidence <= 1.0)) {
      fail(ErrorCode::InvalidRecord, "confidence " + std::to_string(s.confidence) + " outside [0,1]");
    }
  }
}

}  // namespace

int bin_index(double confidence, int bin_count) {
  const double width = static_cast<double>(bin_count);
  int b = static_cast<int>(std::floor(confidence * width));
  b = std::clamp(b, 0, bin_count - 1);
  // floor(c * B) can land one bin off the edge b / B after rounding.
  while (b > 0 && confidence < static_cast<double>(b) / width) --b;
  while (b < bin_count - 1 && confidence >= static_cast<double>(b + 1) / width) ++b;
  return b;
}

EceResult compute_ece(std::span<const ScoredPrediction> scores, int bin_count) {
  if (scores.empty()) fail(ErrorCode::EmptyInput, "ECE of an empty score list");
  if (bin_count < 1) fail(ErrorCode::ConfigError, "bin_count must be >= 1");
  check_confidences(scores);

  std::vector<double> conf_sum(static_cast<std::size_t>(bin_count), 0.0);
  std::vector<int> correct(static_cast<std::size_t>(bin_count), 0);
  std::vector<int> count(static_cast<std::size_t>(bin_count), 0);
  for (const auto& s : scores) {
    const auto b = static_cast<std::size_t>(bin_index(s.confidence, bin_count));
    conf_sum[b] += s.confidence;
    correct[b] += s.correct ? 1 : 0;
    count[b] += 1;
  }

  EceResult res;
  res.bins.bin_count = bin_count;
  const double n = static_cast<double>(scores.size());
  for (int b = 0; b < bin_count; ++b) {
    const auto i = static_cast<std::size_t>(b);
    Bin bin;
    bin.lo = static_cast<double>(b) / bin_count;
    bin.hi = static_cast<double>(b + 1) / bin_count;
    bin.count = count[i];
    if (count[i] > 0) {
      const double mean = conf_sum[i] / count[i];
      bin.accuracy = static_cast<double>(correct[i]) / count[i];
      res.ece += (count[i] / n) * std::fabs(bin.accuracy - mean);
      // Summation rounding can push the mean of edge values just outside the bin.
      bin.mean_confidence = std::clamp(mean, bin.lo, bin.hi);
    }
    res.bins.bins.push_back(bin);
  }
  return res;
}

std::optional<double> compute_auroc(std::span<const ScoredPrediction> scores) {
  check_confidences(scores);
  std::vector<ScoredPrediction> sorted(scores.begin(), scores.end());
  std::sort(sorted.begin(), sorted.end(),
            [](const auto& a, const auto& b) { return a.confidence < b.confidence; });

  double rank_sum_pos = 0.0;
  double n_pos = 0.0;
  std::size_t i = 0;
  while (i < sorted.size()) {
    std::size_t j = i;
    while (j < sorted.size() && sorted[j].confidence == sorted[i].confidence) ++j;
    // Ranks i+1..j share their average.
    const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) {
      if (sorted[k].correct) {
        rank_sum_pos += avg_rank;
        n_pos += 1.0;
      }
    }
    i = j;
  }
  const double n_neg = static_cast<double>(sorted.size()) - n_pos;
  if (n_pos == 0.0 || n_neg == 0.0) return std::nullopt;
  const double u = rank_sum_pos - n_pos * (n_pos + 1.0) / 2.0;
  return u / (n_pos * n_neg);
}

SelectiveRow selective_prediction(std::span<const ScoredPrediction> scores, double threshold) {
  if (!(threshold >= 0.0 && threshold <= 1.0)) {
    fail(ErrorCode::ConfigError, "threshold must lie in [0,1]");
  }
  SelectiveRow row;
  row.threshold = threshold;
  row.total = static_cast<int>(scores.size());
  int kept_correct = 0;
  for (const auto& s : scores) {
    if (s.confidence > threshold) {
      ++row.kept;
      kept_correct += s.correct ? 1 : 0;
    }
  }
  row.coverage = row.total == 0 ? 0.0 : static_cast<double>(row.kept) / row.total;
  if (row.kept > 0) row.filtered_accuracy = static_cast<double>(kept_correct) / row.kept;
  return row;
}

EvaluationReport evaluate(std::span<const UncertaintyScore> scores, const std::string& dataset,
                          const std::string& method, std::span<const double> thresholds,
                          int bin_count) {
  if (scores.empty()) fail(ErrorCode::EmptyInput, "no scored predictions to evaluate");
  const auto preds = predictions_of(scores);

  EvaluationReport r;
  r.dataset = dataset;
  r.method = method;
  r.n_effective = static_cast<int>(preds.size());
  int correct = 0;
  double conf_sum = 0.0;
  for (const auto& p : preds) {
    correct += p.correct ? 1 : 0;
    conf_sum += p.confidence;
  }
  for (const auto& s : scores) r.judge_flags += s.judge_flag ? 1 : 0;
  r.accuracy = static_cast<double>(correct) / r.n_effective;
  r.avg_confidence = conf_sum / r.n_effective;
  r.overconfidence = r.avg_confidence - r.accuracy;
  auto ece = compute_ece(preds, bin_count);
  r.ece = ece.ece;
  r.bins = std::move(ece.bins);
  r.auroc = compute_auroc(preds);
  for (double t : thresholds) r.selective.push_back(selective_prediction(preds, t));
  return r;
}

std::vector<SweepRow> sweep_aggregate(const std::map<double, EvaluationReport>& reports) {
  if (reports.size() < 2) fail(ErrorCode::ConfigError, "a sweep needs >= 2 temperatures");
  std::vector<SweepRow> rows;
  for (const auto& [t, r] : reports) {
    rows.push_back({t, r.accuracy, r.ece, r.auroc, r.overconfidence, r.n_effective});
  }
  return rows;
}

namespace {

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> optional_double(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return it->get<double>();
}

}  // namespace

void to_json(json& j, const EvaluationReport& r) {
  json bins = json::array();
  for (const auto& b : r.bins.bins) {
    bins.push_back({{"lo", b.lo},
                    {"hi", b.hi},
                    {"count", b.count},
                    {"mean_confidence", b.mean_confidence},
                    {"accuracy", b.accuracy}});
  }
  json selective = json::array();
  for (const auto& s : r.selective) {
    selective.push_back({{"threshold", s.threshold},
                         {"coverage", s.coverage},
                         {"filtered_accuracy", optional_json(s.filtered_accuracy)},
                         {"kept", s.kept},
                         {"total", s.total}});
  }
  j = {{"dataset", r.dataset},
       {"method", r.method},
       {"n_effective", r.n_effective},
       {"accuracy", r.accuracy},
       {"avg_confidence", r.avg_confidence},
       {"ece", r.ece},
       {"auroc", optional_json(r.auroc)},
       {"overconfidence", r.overconfidence},
       {"bins", {{"bin_count", r.bins.bin_count}, {"bins", bins}}},
       {"selective", selective},
       {"judge_flags", r.judge_flags}};
}

void from_json(const json& j, EvaluationReport& r) {
  r.dataset = j.at("dataset").get<std::string>();
  r.method = j.at("method").get<std::string>();
  r.n_effective = j.at("n_effective").get<int>();
  r.accuracy = j.at("accuracy").get<double>();
  r.avg_confidence = j.at("avg_confidence").get<double>();
  r.ece = j.at("ece").get<double>();
  r.auroc = optional_double(j, "auroc");
  r.overconfidence = j.at("overconfidence").get<double>();
  r.bins.bin_count = j.at("bins").at("bin_count").get<int>();
  r.bins.bins.clear();
  for (const auto& b : j.at("bins").at("bins")) {
    r.bins.bins.push_back({b.at("lo").get<double>(), b.at("hi").get<double>(),
                           b.at("count").get<int>(), b.at("mean_confidence").get<double>(),
                           b.at("accuracy").get<double>()});
  }
  r.selective.clear();
  for (const auto& s : j.at("selective")) {
    SelectiveRow row;
    row.threshold = s.at("threshold").get<double>();
    row.coverage = s.at("coverage").get<double>();
    row.filtered_accuracy = optional_double(s, "filtered_accuracy");
    row.kept = s.at("kept").get<int>();
    row.total = s.value("total", 0);
    r.selective.push_back(row);
  }
  r.judge_flags = j.value("judge_flags", 0);
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string bins_csv(const ReliabilityBins& bins) {
  std::ostringstream out;
  out << "lo,hi,count,mean_conf,acc\n";
  for (const auto& b : bins.bins) {
    out << format_double(b.lo) << ',' << format_double(b.hi) << ',' << b.count << ','
        << format_double(b.mean_confidence) << ',' << format_double(b.accuracy) << '\n';
  }
  return out.str();
}

std::string sweep_csv(std::span<const SweepRow> rows) {
  std::ostringstream out;
  out << "T,acc,ece,auroc,overconf\n";
  for (const auto& r : rows) {
    out << format_double(r.temperature) << ',' << format_double(r.accuracy) << ','
        << format_double(r.ece) << ',' << (r.auroc ? format_double(*r.auroc) : std::string()) << ','
        << format_double(r.overconfidence) << '\n';
  }
  return out.str();
}

}  // namespace uqgate::metrics
