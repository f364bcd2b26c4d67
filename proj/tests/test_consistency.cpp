#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "uqgate/consistency.hpp"
#include "uqgate/error.hpp"

using namespace uqgate;
using consistency::Backend;

namespace {

// Returns scripted scores keyed by ordered pair; unknown pairs score 0.
class TableClient final : public sim::SimilarityClient {
 public:
  std::map<std::pair<std::string, std::string>, double> table;
  std::vector<sim::SimilarityRequest> seen;

  std::vector<double> score_pairs(const sim::SimilarityRequest& req) override {
    seen.push_back(req);
    std::vector<double> out;
    for (const auto& p : req.pairs) {
      auto it = table.find(p);
      out.push_back(it == table.end() ? 0.0 : it->second);
    }
    return out;
  }
  std::string name() const override { return "table"; }
};

consistency::SimilarityMatrix matrix_of(const std::vector<double>& upper, std::size_t k) {
  consistency::SimilarityMatrix m(k, Backend::lexical_fallback);
  std::size_t idx = 0;
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = i + 1; j < k; ++j) m.set(i, j, upper[idx++]);
  return m;
}

double lexical_score(const std::vector<std::string>& answers) {
  return consistency::consistency_score(consistency::pairwise_similarities(answers, Backend::lexical_fallback, nullptr));
}

std::vector<std::string> tokens(const std::string& s) {
  std::vector<std::string> out;
  std::string w;
  for (char c : s) {
    if (c == ' ') {
      if (!w.empty()) out.push_back(w);
      w.clear();
    } else {
      w.push_back(c);
    }
  }
  if (!w.empty()) out.push_back(w);
  return out;
}

// Mean pairwise Jaccard computed directly over all pairs.
double oracle_score(const std::vector<std::string>& answers) {
  double sum = 0.0;
  int pairs = 0;
  for (std::size_t i = 0; i < answers.size(); ++i)
    for (std::size_t j = i + 1; j < answers.size(); ++j) {
      sum += oracle::jaccard(tokens(answers[i]), tokens(answers[j]));
      ++pairs;
    }
  return sum / pairs;
}

}  // namespace

TEST_CASE("identical answers score 1 on every backend without a sidecar call") {
  TableClient client;
  const std::vector<std::string> same(4, "Paris");
  for (auto b : {Backend::embedding_cosine, Backend::nli_entailment, Backend::lexical_fallback}) {
    const auto m = consistency::pairwise_similarities(same, b, &client);
    CHECK(consistency::consistency_score(m) == 1.0);
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 4; ++j) CHECK(m.at(i, j) == 1.0);
  }
  CHECK(client.seen.empty());
}

TEST_CASE("lexical pair example") {
  const std::vector<std::string> answers = {"a b c", "a b d"};
  const auto m = consistency::pairwise_similarities(answers, Backend::lexical_fallback, nullptr);
  CHECK(m.at(0, 1) == 0.5);
  CHECK(m.at(1, 0) == 0.5);
}

TEST_CASE("nli directions are averaged, or minimized when configured") {
  TableClient client;
  client.table[{"x", "y"}] = 0.9;
  client.table[{"y", "x"}] = 0.7;
  const std::vector<std::string> answers = {"x", "y"};
  const auto avg = consistency::pairwise_similarities(answers, Backend::nli_entailment, &client);
  CHECK(avg.at(0, 1) == doctest::Approx(0.8).epsilon(1e-15));
  REQUIRE(client.seen.size() == 1);
  CHECK(client.seen[0].backend == sim::WireBackend::nli);
  CHECK(client.seen[0].pairs.size() == 2);

  consistency::PairwiseOptions opts;
  opts.symmetry = consistency::NliSymmetry::min;
  const auto mn = consistency::pairwise_similarities(answers, Backend::nli_entailment, &client, opts);
  CHECK(mn.at(0, 1) == 0.7);
}

TEST_CASE("embedding backend sends one request per pair") {
  TableClient client;
  client.table[{"a", "b"}] = 0.25;
  const std::vector<std::string> answers = {"a", "b"};
  const auto m = consistency::pairwise_similarities(answers, Backend::embedding_cosine, &client);
  CHECK(m.at(0, 1) == 0.25);
  CHECK(client.seen.at(0).backend == sim::WireBackend::embedding);
  CHECK(client.seen.at(0).pairs.size() == 1);
}

TEST_CASE("remote backends need a client") {
  const std::vector<std::string> answers = {"a", "b"};
  try {
    consistency::pairwise_similarities(answers, Backend::nli_entailment, nullptr);
    FAIL("expected BackendUnavailable");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::BackendUnavailable);
  }
  const std::vector<std::string> one = {"a"};
  CHECK_THROWS_AS(consistency::pairwise_similarities(one, Backend::lexical_fallback, nullptr), Error);
}

TEST_CASE("consistency_score is the upper-triangle mean") {
  CHECK(consistency::consistency_score(matrix_of({1.0, 1.0, 1.0}, 3)) == 1.0);
  CHECK(consistency::consistency_score(matrix_of({0.8, 0.6, 0.4}, 3)) == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(consistency::consistency_score(matrix_of({0.25}, 2)) == 0.25);

  const auto st = consistency::consistency_uncertainty_stats(matrix_of({0.8, 0.6, 0.4}, 3));
  CHECK(st.min == 0.4);
  CHECK(st.variance == doctest::Approx((0.04 + 0.0 + 0.04) / 3).epsilon(1e-12));
}

TEST_CASE("lexical consistency agrees with the all-pairs oracle and is order-free") {
  std::mt19937 rng(3);
  const std::vector<std::string> words = {"red", "blue", "green", "the", "cat", "dog"};
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<std::string> answers(2 + rng() % 7);
    for (auto& a : answers) {
      const int n = 1 + static_cast<int>(rng() % 3);
      for (int i = 0; i < n; ++i) a += (i ? " " : "") + words[rng() % words.size()];
    }
    const double s = lexical_score(answers);
    CHECK(s == doctest::Approx(oracle_score(answers)).epsilon(1e-12));
    CHECK(s >= 0.0);
    CHECK(s <= 1.0);
    auto shuffled = answers;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    CHECK(lexical_score(shuffled) == s);
  }
}

TEST_CASE("duplicate replacement does not always raise the score") {
  // Replacing one member of the larger cluster with a copy from the smaller one
  // breaks more agreeing pairs than it creates.
  const double before = lexical_score({"x", "x", "x", "y"});
  const double after = lexical_score({"y", "x", "x", "y"});
  CHECK(before == doctest::Approx(3.0 / 6.0));
  CHECK(after == doctest::Approx(2.0 / 6.0));
  CHECK(after < before);
}

TEST_CASE("duplicate replacement changes the pair sum by a closed-form amount") {
  // Replacing answer r by a copy of answer d changes the pair sum by
  //   1 - s(r, d) + sum_{j != r, d} (s(d, j) - s(r, j)),
  // and the score never drops when r is no closer to any other answer than d is.
  std::mt19937 rng(9);
  const std::vector<std::string> words = {"a", "b", "c", "d", "e"};
  int dominated = 0;
  for (int trial = 0; trial < 400; ++trial) {
    const std::size_t k = 2 + rng() % 6;
    std::vector<std::string> answers(k);
    for (auto& a : answers) {
      const int n = 1 + static_cast<int>(rng() % 3);
      for (int i = 0; i < n; ++i) a += (i ? " " : "") + words[rng() % words.size()];
    }
    const std::size_t r = rng() % k;
    std::size_t d = rng() % k;
    if (d == r) d = (d + 1) % k;

    const auto m = consistency::pairwise_similarities(answers, Backend::lexical_fallback, nullptr);
    double delta = 1.0 - m.at(r, d);
    bool r_never_closer = true;
    for (std::size_t j = 0; j < k; ++j) {
      if (j == r || j == d) continue;
      delta += m.at(d, j) - m.at(r, j);
      if (m.at(r, j) > m.at(d, j)) r_never_closer = false;
    }
    const double pairs = static_cast<double>(k * (k - 1) / 2);
    auto replaced = answers;
    replaced[r] = answers[d];
    const double before = lexical_score(answers);
    const double after = lexical_score(replaced);
    CHECK(after - before == doctest::Approx(delta / pairs).epsilon(1e-9));
    if (r_never_closer) {
      ++dominated;
      CHECK(after >= before - 1e-15);
    }
  }
  CHECK(dominated > 0);
}

TEST_CASE("similarities_to scores the star against each alternative") {
  const std::vector<std::string> others = {"a b", "a c", "z"};
  const auto s = consistency::similarities_to("a b", others, Backend::lexical_fallback, nullptr);
  REQUIRE(s.size() == 3);
  CHECK(s[0] == 1.0);
  CHECK(s[1] == doctest::Approx(1.0 / 3.0));
  CHECK(s[2] == 0.0);
}
