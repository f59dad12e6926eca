#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "prefmem/gateway.hpp"
#include "prefmem/prefstore.hpp"

namespace prefmem {

struct RetrievalQuery {
  std::string user_id;
  std::string utterance;
  int k = 3;
  // Dynamic-n mode: k becomes the number of preferences the user holds in
  // this sub-category at snapshot time.
  std::optional<std::string> dynamic_sub;
};

struct RankedPreference {
  Preference preference;
  double score = 0.0;  // cosine in [-1, 1]
};

struct RetrievalOptions {
  std::string embedding_model = "mock-embed";
  double score_floor = -1.0;  // -1 disables filtering
  bool apply_floor = false;   // evaluation mode never filters
};

// "<detail display name, lowercased>: <value>. <sentence>"
std::string enriched_text(const std::string& detail_display_name, const std::string& value,
                          const std::string& source_sentence);

// Throws ValidationError on dimension mismatch or a zero vector.
double cosine(const EmbeddingVector& a, const EmbeddingVector& b);

// Top-k preferences by cosine between the raw utterance embedding and the
// stored (enriched) embeddings. Sorted by score descending; ties break by
// earlier created_at, then id, so the ranking is total and deterministic.
std::vector<RankedPreference> retrieve(Gateway& gateway, const RetrievalQuery& query,
                                       const StoreSnapshot& snapshot,
                                       const RetrievalOptions& options = {});

struct QueryOutcome {
  std::vector<std::string> ranked_ids;  // full ranking, best first
  int n = 0;                            // resolved dynamic n for this query
  std::string ground_truth_id;
};

// Fraction of queries whose ground truth appears within the top-(n+offset).
std::map<int, double> topk_accuracy(const std::vector<QueryOutcome>& outcomes,
                                    const std::vector<int>& offsets = {0, 1, 2});

}  // namespace prefmem
