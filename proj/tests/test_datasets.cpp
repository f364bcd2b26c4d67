#include <doctest.h>

#include <set>

#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/spdlog.h>

#include "oracles.hpp"
#include "uqgate/datasets.hpp"
#include "uqgate/error.hpp"

using namespace uqgate;
namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = UQGATE_FIXTURE_DIR;

std::string error_of(auto&& fn, ErrorCode expected) {
  try {
    fn();
  } catch (const Error& e) {
    CHECK(e.code() == expected);
    return e.what();
  }
  FAIL("expected an Error");
  return {};
}

}  // namespace

TEST_CASE("squad2 drops unanswerable questions and logs the count") {
  std::ostringstream log;
  auto sink = std::make_shared<spdlog::sinks::ostream_sink_mt>(log);
  auto previous = spdlog::default_logger();
  spdlog::set_default_logger(std::make_shared<spdlog::logger>("capture", sink));

  const auto res = datasets::ingest_file(kFixtures / "squad2_sample.json", Dataset::squad2);
  spdlog::set_default_logger(previous);

  CHECK(res.records.size() == 10);
  CHECK(res.dropped_unanswerable == 3);
  CHECK(log.str().find("dropped 3") != std::string::npos);
  CHECK(res.records[0].id == "a0");
  CHECK(res.records[0].gold_answers == std::vector<std::string>{"item 0"});
  CHECK(res.records[0].context == "item 0 item 1 ... item 9");
  CHECK(res.records[9].context == "more items");
  for (const auto& q : res.records) CHECK(q.dataset == Dataset::squad2);
}

TEST_CASE("squad2 JSONL layout") {
  const auto res = datasets::ingest_text(
      R"({"id":"s1","question":"Where?","context":"In Paris.","answers":{"text":["Paris","Paris"]}}
{"id":"s2","question":"Who?","context":"Nobody.","answers":{"text":[]}}
)",
      Dataset::squad2);
  REQUIRE(res.records.size() == 1);
  CHECK(res.dropped_unanswerable == 1);
  CHECK(res.records[0].gold_answers == std::vector<std::string>{"Paris"});
}

TEST_CASE("boolq gold maps to yes/no") {
  const auto res = datasets::ingest_text(
      R"({"question":"is the sky blue","passage":"It is.","answer":true}
{"question":"is fire cold","passage":"No.","answer":false}
{"question":"is water wet","passage":"Yes.","label":1}
)",
      Dataset::boolq);
  REQUIRE(res.records.size() == 3);
  CHECK(res.records[0].gold_answers == std::vector<std::string>{"yes"});
  CHECK(res.records[1].gold_answers == std::vector<std::string>{"no"});
  CHECK(res.records[2].gold_answers == std::vector<std::string>{"yes"});
  CHECK(res.records[0].context == "It is.");
  CHECK(res.records[0].id == "boolq-1");
}

TEST_CASE("gsm8k gold is the number after the final delimiter") {
  const auto res = datasets::ingest_file(kFixtures / "gsm8k_sample.jsonl", Dataset::gsm8k);
  REQUIRE(res.records.size() == 2);
  CHECK(res.records[0].gold_answers == std::vector<std::string>{"72"});
  CHECK(res.records[1].gold_answers == std::vector<std::string>{"5000"});
  CHECK(res.records[0].id == "gsm8k-1");
  CHECK_FALSE(res.records[0].context.has_value());

  const auto msg = error_of(
      [] {
        datasets::ingest_text("{\"question\":\"a\",\"answer\":\"#### 1\"}\n{\"question\":\"b\",\"answer\":\"no delimiter\"}\n",
                              Dataset::gsm8k);
      },
      ErrorCode::SchemaMismatch);
  CHECK(msg.find("line 2") != std::string::npos);
}

TEST_CASE("triviaqa keeps every alias") {
  const auto official = datasets::ingest_text(
      R"({"Data":[{"QuestionId":"tq1","Question":"Largest planet?","Answer":{"Value":"Jupiter","Aliases":["Jupiter","Jove","planet jupiter"],"NormalizedAliases":["jupiter","jove","planet jupiter"]}}]})",
      Dataset::triviaqa);
  REQUIRE(official.records.size() == 1);
  const auto& gold = official.records[0].gold_answers;
  CHECK(gold.front() == "Jupiter");
  const std::set<std::string> all(gold.begin(), gold.end());
  CHECK(all.count("Jove") == 1);
  CHECK(all.count("planet jupiter") == 1);
  CHECK(std::set<std::string>(gold.begin(), gold.end()).size() == gold.size());

  const auto jsonl = datasets::ingest_text(
      R"({"question":"Capital of France?","answer":{"value":"Paris","aliases":["Paris","City of Light"]}}
)",
      Dataset::triviaqa);
  REQUIRE(jsonl.records.size() == 1);
  CHECK(jsonl.records[0].gold_answers == std::vector<std::string>{"Paris", "City of Light"});
}

TEST_CASE("schema errors name the record") {
  auto msg = error_of([] { datasets::ingest_text("{\"question\":\"a\",\"passage\":\"p\",\"answer\":true}\nnot json\n", Dataset::boolq); },
                      ErrorCode::SchemaMismatch);
  CHECK(msg.find("line 2") != std::string::npos);
  msg = error_of([] { datasets::ingest_text("{\"passage\":\"p\",\"answer\":true}\n", Dataset::boolq); },
                 ErrorCode::SchemaMismatch);
  CHECK(msg.find("line 1") != std::string::npos);
  msg = error_of([] { datasets::ingest_text(R"({"Data":[{"Question":"q"}]})", Dataset::triviaqa); },
                 ErrorCode::SchemaMismatch);
  CHECK(msg.find("1") != std::string::npos);
}

TEST_CASE("custom records round-trip through write_queries") {
  oracle::TempDir dir("queries");
  std::vector<QueryRecord> recs;
  for (int i = 0; i < 3; ++i) {
    QueryRecord q;
    q.id = "c" + std::to_string(i);
    q.dataset = Dataset::custom;
    q.question = "Q" + std::to_string(i);
    q.gold_answers = {"a" + std::to_string(i)};
    recs.push_back(q);
  }
  datasets::write_queries(dir / "q.jsonl", recs);
  CHECK(datasets::read_queries(dir / "q.jsonl") == recs);
  CHECK(datasets::ingest_file(dir / "q.jsonl", Dataset::custom).records == recs);

  recs.push_back(recs[0]);
  std::ofstream out(dir / "dup.jsonl");
  for (const auto& q : recs) out << nlohmann::json(q).dump() << "\n";
  out.close();
  const auto msg = error_of([&] { datasets::read_queries(dir / "dup.jsonl"); }, ErrorCode::SchemaMismatch);
  CHECK(msg.find("duplicate") != std::string::npos);
}

TEST_CASE("subsample is seeded, sized and order-preserving") {
  std::vector<QueryRecord> recs;
  for (int i = 0; i < 50; ++i) {
    QueryRecord q;
    q.id = "q" + std::to_string(100 + i);
    q.question = "?";
    q.gold_answers = {"x"};
    recs.push_back(q);
  }
  const auto a = datasets::subsample(recs, 10, 42);
  const auto b = datasets::subsample(recs, 10, 42);
  const auto c = datasets::subsample(recs, 10, 43);
  CHECK(a == b);
  CHECK(a != c);
  REQUIRE(a.size() == 10);
  for (std::size_t i = 1; i < a.size(); ++i) CHECK(a[i - 1].id < a[i].id);
  CHECK(datasets::subsample(recs, 80, 1) == recs);
}
