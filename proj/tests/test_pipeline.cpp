#include <doctest.h>

#include "uqgate/error.hpp"
#include "uqgate/pipeline.hpp"

using namespace uqgate;
using pipeline::ScoringOptions;

namespace {

QueryRecord query(std::string id, std::string gold) {
  QueryRecord q;
  q.id = std::move(id);
  q.dataset = Dataset::triviaqa;
  q.question = "?";
  q.gold_answers = {std::move(gold)};
  return q;
}

SampleRecord sample(const std::string& qid, int idx, std::string answer, std::optional<double> conf = {},
                    std::optional<std::vector<double>> lp = {}) {
  SampleRecord s;
  s.query_id = qid;
  s.sample_index = idx;
  s.raw_text = "Answer: " + answer;
  s.extracted_answer = std::move(answer);
  s.verbalized_confidence = conf;
  s.token_logprobs = std::move(lp);
  return s;
}

SampleRecord filtered(const std::string& qid, int idx, FilterReason r) {
  SampleRecord s;
  s.query_id = qid;
  s.sample_index = idx;
  s.mark_filtered(r);
  return s;
}

ScoringOptions opts(Method m) {
  ScoringOptions o;
  o.method = m;
  o.backend = consistency::Backend::lexical_fallback;
  o.has_primary = m == Method::cocoa || m == Method::cocoa_or;
  return o;
}

}  // namespace

TEST_CASE("vce_single scores the first sample and excludes filtered ones") {
  const std::vector<QueryRecord> qs = {query("a", "Paris"), query("b", "Rome"), query("c", "Oslo")};
  const std::vector<SampleRecord> ss = {sample("a", 0, "Paris", 90), sample("b", 0, "Lima", 40),
                                        filtered("c", 0, FilterReason::unparseable_confidence)};
  const auto res = pipeline::score_queries(qs, ss, opts(Method::vce_single), nullptr);
  REQUIRE(res.scores.size() == 2);
  CHECK(res.scores[0].confidence == 0.9);
  CHECK(res.scores[0].correct);
  CHECK(res.scores[1].confidence == 0.4);
  CHECK_FALSE(res.scores[1].correct);
  CHECK(res.excluded == std::map<std::string, int>{{"unparseable_confidence", 1}});
}

TEST_CASE("vce_multi aggregates and picks the majority surface form") {
  const std::vector<QueryRecord> qs = {query("a", "Paris")};
  const std::vector<SampleRecord> ss = {sample("a", 0, "Lyon", 100), sample("a", 1, "paris.", 80),
                                        sample("a", 2, "Paris", 90)};
  const auto res = pipeline::score_queries(qs, ss, opts(Method::vce_multi), nullptr);
  REQUIRE(res.scores.size() == 1);
  CHECK(res.scores[0].confidence == 170.0 / 270.0);
  CHECK(res.scores[0].chosen_answer == "paris.");
  CHECK(res.scores[0].correct);
}

TEST_CASE("msp fits its normalizer over the run") {
  const std::vector<QueryRecord> qs = {query("a", "x"), query("b", "x"), query("c", "x")};
  const std::vector<SampleRecord> ss = {sample("a", 0, "x", {}, std::vector<double>{-1.0}),
                                        sample("b", 0, "y", {}, std::vector<double>{-2.0, -1.0}),
                                        sample("c", 0, "x", {}, std::vector<double>{-0.5, -1.5})};
  auto o = opts(Method::msp);
  o.clip_percentile = 1.0;
  const auto res = pipeline::score_queries(qs, ss, o, nullptr);
  REQUIRE(res.normalizer);
  CHECK(res.normalizer->min_u == 1.0);
  CHECK(res.normalizer->q98 == 3.0);
  CHECK(res.scores[0].confidence == 1.0);
  CHECK(res.scores[1].confidence == 0.0);
  CHECK(res.scores[2].confidence == 0.5);
}

TEST_CASE("msp without logprobs excludes the query as malformed") {
  const std::vector<QueryRecord> qs = {query("a", "x"), query("b", "x"), query("c", "x")};
  const std::vector<SampleRecord> ss = {sample("a", 0, "x", {}, std::vector<double>{-1.0}),
                                        sample("b", 0, "x"),
                                        sample("c", 0, "x", {}, std::vector<double>{-3.0})};
  const auto res = pipeline::score_queries(qs, ss, opts(Method::msp), nullptr);
  CHECK(res.scores.size() == 2);
  CHECK(res.excluded.at("malformed_structure") == 1);
}

TEST_CASE("consistency uses the mean pairwise similarity") {
  const std::vector<QueryRecord> qs = {query("a", "red barn")};
  const std::vector<SampleRecord> ss = {sample("a", 0, "red barn"), sample("a", 1, "red barn"),
                                        sample("a", 2, "blue barn"),
                                        filtered("a", 3, FilterReason::empty_output)};
  const auto res = pipeline::score_queries(qs, ss, opts(Method::consistency), nullptr);
  REQUIRE(res.scores.size() == 1);
  CHECK(res.scores[0].confidence == doctest::Approx((1.0 + 1.0 / 3 + 1.0 / 3) / 3));
  CHECK(res.scores[0].raw_uncertainty == doctest::Approx(1.0 - res.scores[0].confidence));
  CHECK(res.scores[0].chosen_answer == "red barn");
  CHECK(res.scores[0].correct);

  const std::vector<SampleRecord> thin = {sample("a", 0, "x"), filtered("a", 1, FilterReason::overlong_output),
                                          filtered("a", 2, FilterReason::overlong_output)};
  const auto none = pipeline::score_queries(qs, thin, opts(Method::consistency), nullptr);
  CHECK(none.scores.empty());
  CHECK(none.excluded.at("overlong_output") == 1);
}

TEST_CASE("cocoa uses the primary answer and the alternatives") {
  std::vector<QueryRecord> qs;
  std::vector<SampleRecord> ss;
  for (int i = 0; i < 3; ++i) {
    const std::string id = "q" + std::to_string(i);
    qs.push_back(query(id, "paris"));
    ss.push_back(sample(id, 0, "paris", {}, std::vector<double>{-1.0 * (i + 1)}));
    ss.push_back(sample(id, 1, "paris"));
    ss.push_back(sample(id, 2, i == 0 ? "paris" : "rome"));
  }
  auto o = opts(Method::cocoa);
  o.clip_percentile = 1.0;
  const auto res = pipeline::score_queries(qs, ss, o, nullptr);
  REQUIRE(res.scores.size() == 3);
  // fused values: 1 * 0, 2 * 0.5, 3 * 0.5
  CHECK(res.scores[0].raw_uncertainty == 0.0);
  CHECK(res.scores[1].raw_uncertainty == 1.0);
  CHECK(res.scores[2].raw_uncertainty == 1.5);
  CHECK(res.scores[0].confidence == 1.0);
  CHECK(res.scores[2].confidence == 0.0);
  CHECK(res.scores[1].components->u == 2.0);

  auto no_primary = o;
  no_primary.has_primary = false;
  CHECK_THROWS_AS(pipeline::score_queries(qs, ss, no_primary, nullptr), Error);

  ss[0].mark_filtered(FilterReason::empty_output);
  const auto dropped = pipeline::score_queries(qs, ss, o, nullptr);
  CHECK(dropped.scores.size() == 2);
  CHECK(dropped.excluded.at("empty_output") == 1);
}

TEST_CASE("a query with no cached samples is a corrupt cache") {
  const std::vector<QueryRecord> qs = {query("a", "x"), query("b", "x")};
  const std::vector<SampleRecord> ss = {sample("a", 0, "x", 50)};
  try {
    pipeline::score_queries(qs, ss, opts(Method::vce_single), nullptr);
    FAIL("expected CacheCorrupt");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::CacheCorrupt);
  }
}

TEST_CASE("dominant reason") {
  std::vector<SampleRecord> ss = {filtered("a", 0, FilterReason::overlong_output),
                                  filtered("a", 1, FilterReason::empty_output),
                                  filtered("a", 2, FilterReason::overlong_output)};
  CHECK(pipeline::dominant_reason(ss) == FilterReason::overlong_output);
  ss.pop_back();
  CHECK(pipeline::dominant_reason(ss) == FilterReason::empty_output);
  CHECK(pipeline::dominant_reason({}, FilterReason::unparseable_confidence) == FilterReason::unparseable_confidence);
}

TEST_CASE("scoring options round-trip") {
  ScoringOptions o = opts(Method::cocoa_or);
  o.symmetry = consistency::NliSymmetry::min;
  o.judge.containment = true;
  const auto back = nlohmann::json(o).get<ScoringOptions>();
  CHECK(nlohmann::json(back) == nlohmann::json(o));
}
