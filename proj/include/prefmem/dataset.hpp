#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "prefmem/extraction.hpp"
#include "prefmem/taxonomy.hpp"

namespace prefmem {

struct MaintenanceUtterances {
  std::string equal;
  std::string negate;
  std::string different;
};

// One corpus entry: an extraction conversation revealing exactly one ground
// truth preference, plus a retrieval utterance and the three maintenance
// utterance types from a later session.
struct DataPoint {
  std::string id;
  std::string user_id;
  CandidatePreference ground_truth;
  ConversationTranscript extraction_conversation;
  std::string retrieval_utterance;
  MaintenanceUtterances maintenance_utterances;

  nlohmann::json to_json() const;
  static DataPoint from_json(const nlohmann::json& j);
};

struct CorpusStats {
  size_t extraction_conversations = 0;
  size_t retrieval_utterances = 0;
  size_t maintenance_utterances = 0;
  double avg_turns_per_conversation = 0.0;
  double avg_words_per_conversation = 0.0;
  double avg_words_per_retrieval_utterance = 0.0;
  double avg_words_per_maintenance_utterance = 0.0;
};

struct CorpusLoadResult {
  std::vector<DataPoint> points;
  // One entry per invalid record: "<file>:<line>: <problem>". Loading
  // continues past invalid records.
  std::vector<std::string> issues;
};

// Reads a corpus from a .jsonl file (one data point per line) or from a
// directory containing data_points.jsonl. Every point is validated against
// the taxonomy.
CorpusLoadResult load_corpus(const std::filesystem::path& path,
                             const CategoryTaxonomy& taxonomy);

// Canonical serialization; load -> serialize -> load is identity.
std::string serialize_corpus(const std::vector<DataPoint>& points);

// Recomputed from the records, never trusted from file.
CorpusStats corpus_stats(const std::vector<DataPoint>& points);

// Deterministic stratified split by ground-truth main category. Fractions
// must sum to 1; the result is a partition sized by largest remainder so the
// global counts are exact.
std::pair<std::vector<DataPoint>, std::vector<DataPoint>> split_corpus(
    const std::vector<DataPoint>& points, double first_fraction, double second_fraction,
    uint64_t seed);

// Unique n-grams over the whitespace/punctuation tokenization of the
// concatenated texts, divided by total n-grams. n in {1,2,3}; requires at
// least n tokens.
double distinct_n(const std::vector<std::string>& texts, int n);

}  // namespace prefmem
