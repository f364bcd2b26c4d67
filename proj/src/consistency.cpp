#include "uqgate/consistency.hpp"

#include <algorithm>
#include <utility>

#include "uqgate/error.hpp"

namespace uqgate::consistency {

std::string_view to_string(Backend b) {
  switch (b) {
    case Backend::embedding_cosine: return "embedding_cosine";
    case Backend::nli_entailment: return "nli_entailment";
    case Backend::lexical_fallback: return "lexical_fallback";
  }
  return "unknown";
}

Backend parse_backend(std::string_view s) {
  if (s == "embedding_cosine" || s == "embedding") return Backend::embedding_cosine;
  if (s == "nli_entailment" || s == "nli") return Backend::nli_entailment;
  if (s == "lexical_fallback" || s == "lexical") return Backend::lexical_fallback;
  fail(ErrorCode::ConfigError, "unknown similarity backend '" + std::string(s) + "'");
}

std::string_view to_string(NliSymmetry s) { return s == NliSymmetry::average ? "average" : "min"; }

NliSymmetry parse_symmetry(std::string_view s) {
  if (s == "average") return NliSymmetry::average;
  if (s == "min") return NliSymmetry::min;
  fail(ErrorCode::ConfigError, "unknown NLI symmetry '" + std::string(s) + "'");
}

SimilarityMatrix::SimilarityMatrix(std::size_t k, Backend backend)
    : k_(k), backend_(backend), values_(k * k, 0.0) {
  for (std::size_t i = 0; i < k; ++i) values_[i * k + i] = 1.0;
}

void SimilarityMatrix::set(std::size_t i, std::size_t j, double v) {
  values_[i * k_ + j] = v;
  values_[j * k_ + i] = v;
}

std::vector<double> SimilarityMatrix::upper_triangle() const {
  std::vector<double> out;
  out.reserve(k_ * (k_ - 1) / 2);
  for (std::size_t i = 0; i < k_; ++i) {
    for (std::size_t j = i + 1; j < k_; ++j) out.push_back(at(i, j));
  }
  return out;
}

namespace {

// Scores unordered pairs (a_i, b_i) under the backend's symmetric rule.
std::vector<double> score_symmetric(const std::vector<std::pair<std::string, std::string>>& pairs,
                                    Backend backend, sim::SimilarityClient* client,
                                    const PairwiseOptions& options) {
  std::vector<double> out(pairs.size(), 1.0);
  std::vector<std::size_t> pending;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (pairs[i].first != pairs[i].second) pending.push_back(i);
  }
  if (pending.empty()) return out;

  if (backend == Backend::lexical_fallback) {
    for (auto i : pending) out[i] = sim::lexical_similarity(pairs[i].first, pairs[i].second);
    return out;
  }
  if (client == nullptr) {
    fail(ErrorCode::BackendUnavailable,
         std::string(to_string(backend)) + " needs a similarity client");
  }

  sim::SimilarityRequest req;
  req.batch_id = options.batch_id;
  if (backend == Backend::embedding_cosine) {
    req.backend = sim::WireBackend::embedding;
    for (auto i : pending) req.pairs.push_back(pairs[i]);
    const auto scores = client->score_pairs(req);
    if (scores.size() != pending.size()) {
      fail(ErrorCode::BatchShapeMismatch, "embedding scores do not match request length");
    }
    for (std::size_t k = 0; k < pending.size(); ++k) out[pending[k]] = scores[k];
    return out;
  }

  // NLI is directional: ask for both directions and combine.
  req.backend = sim::WireBackend::nli;
  for (auto i : pending) {
    req.pairs.push_back(pairs[i]);
    req.pairs.emplace_back(pairs[i].second, pairs[i].first);
  }
  const auto scores = client->score_pairs(req);
  if (scores.size() != 2 * pending.size()) {
    fail(ErrorCode::BatchShapeMismatch, "nli scores do not match request length");
  }
  for (std::size_t k = 0; k < pending.size(); ++k) {
    const double fwd = scores[2 * k];
    const double bwd = scores[2 * k + 1];
    out[pending[k]] =
        options.symmetry == NliSymmetry::average ? (fwd + bwd) / 2.0 : std::min(fwd, bwd);
  }
  return out;
}

}  // namespace

SimilarityMatrix pairwise_similarities(std::span<const std::string> answers, Backend backend,
                                       sim::SimilarityClient* client,
                                       const PairwiseOptions& options) {
  const std::size_t k = answers.size();
  if (k < 2) fail(ErrorCode::TooFewValues, "pairwise similarity needs >= 2 answers");

  std::vector<std::pair<std::string, std::string>> pairs;
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = i + 1; j < k; ++j) pairs.emplace_back(answers[i], answers[j]);
  }
  const auto scores = score_symmetric(pairs, backend, client, options);

  SimilarityMatrix m(k, backend);
  std::size_t idx = 0;
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = i + 1; j < k; ++j) m.set(i, j, scores[idx++]);
  }
  return m;
}

std::vector<double> similarities_to(std::string_view star, std::span<const std::string> others,
                                    Backend backend, sim::SimilarityClient* client,
                                    const PairwiseOptions& options) {
  std::vector<std::pair<std::string, std::string>> pairs;
  for (const auto& o : others) pairs.emplace_back(std::string(star), o);
  if (pairs.empty()) return {};
  return score_symmetric(pairs, backend, client, options);
}

double consistency_score(const SimilarityMatrix& matrix) {
  return consistency_uncertainty_stats(matrix).mean;
}

PairStats consistency_uncertainty_stats(const SimilarityMatrix& matrix) {
  auto vals = matrix.upper_triangle();
  if (vals.empty()) fail(ErrorCode::TooFewValues, "matrix has no pairs");
  // Sorted summation keeps the mean exactly invariant to answer order.
  std::sort(vals.begin(), vals.end());
  PairStats st;
  double sum = 0.0;
  st.min = vals.front();
  for (double v : vals) {
    sum += v;
    st.min = std::min(st.min, v);
  }
  st.mean = sum / static_cast<double>(vals.size());
  double sq = 0.0;
  for (double v : vals) sq += (v - st.mean) * (v - st.mean);
  st.variance = sq / static_cast<double>(vals.size());
  return st;
}

}  // namespace uqgate::consistency
