#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "uqgate/types.hpp"

namespace uqgate::datasets {

struct IngestResult {
  std::vector<QueryRecord> records;
  int dropped_unanswerable = 0;
};

/// Converts a benchmark file in its published layout to QueryRecords, in file order.
///
///   boolq     JSONL {question, passage, answer: bool}
///   squad2    official JSON (data/paragraphs/qas) or JSONL {id, question, context,
///             answers: {text: [...]}}; unanswerable questions are dropped
///   triviaqa  official JSON {Data: [{Question, Answer: {Value, Aliases}}]} or JSONL
///             {question, answer: {value, aliases}}
///   gsm8k     JSONL {question, answer}; gold is the number after the final "####"
///   custom    QueryRecord JSONL
///
/// Throws SchemaMismatch naming the offending line (record index for whole-file JSON).
IngestResult ingest_text(std::string_view content, Dataset kind);
IngestResult ingest_file(const std::filesystem::path& path, Dataset kind);

/// Seeded shuffle, prefix of `n`, then back to original order.
std::vector<QueryRecord> subsample(std::vector<QueryRecord> records, std::size_t n,
                                   std::uint64_t seed);

std::vector<QueryRecord> read_queries(const std::filesystem::path& path);
void write_queries(const std::filesystem::path& path, const std::vector<QueryRecord>& records);

}  // namespace uqgate::datasets
