#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "uqgate/similarity.hpp"

namespace uqgate::consistency {

enum class Backend { embedding_cosine, nli_entailment, lexical_fallback };

// How the two NLI directions of a pair are combined into one symmetric score.
enum class NliSymmetry { average, min };

std::string_view to_string(Backend b);
Backend parse_backend(std::string_view s);
std::string_view to_string(NliSymmetry s);
NliSymmetry parse_symmetry(std::string_view s);

/// Symmetric k x k similarity matrix with unit diagonal and entries in [0, 1].
class SimilarityMatrix {
 public:
  SimilarityMatrix(std::size_t k, Backend backend);

  std::size_t size() const { return k_; }
  Backend backend() const { return backend_; }
  double at(std::size_t i, std::size_t j) const { return values_[i * k_ + j]; }
  // Sets both (i, j) and (j, i).
  void set(std::size_t i, std::size_t j, double v);
  // Upper-triangle entries (i < j) in row-major order.
  std::vector<double> upper_triangle() const;

 private:
  std::size_t k_;
  Backend backend_;
  std::vector<double> values_;
};

struct PairwiseOptions {
  NliSymmetry symmetry = NliSymmetry::average;
  std::string batch_id = "pairwise";
};

/// Builds the pairwise similarity matrix for k >= 2 answers. Identical answer
/// strings score 1 without consulting the backend. The lexical backend is computed
/// locally and `client` may be null for it.
SimilarityMatrix pairwise_similarities(std::span<const std::string> answers, Backend backend,
                                       sim::SimilarityClient* client,
                                       const PairwiseOptions& options = {});

/// Similarities s(star, other_i) for each alternative, using the same pair rules.
std::vector<double> similarities_to(std::string_view star, std::span<const std::string> others,
                                    Backend backend, sim::SimilarityClient* client,
                                    const PairwiseOptions& options = {});

/// Mean of the k(k-1)/2 upper-triangle similarities; used directly as a confidence.
double consistency_score(const SimilarityMatrix& matrix);

struct PairStats {
  double mean = 0.0;
  double variance = 0.0;  // population variance
  double min = 0.0;
};

PairStats consistency_uncertainty_stats(const SimilarityMatrix& matrix);

}  // namespace uqgate::consistency
