#include "prefmem/retrieval.hpp"

#include <algorithm>
#include <cmath>

#include "prefmem/errors.hpp"
#include "prefmem/util.hpp"

namespace prefmem {

std::string enriched_text(const std::string& detail_display_name, const std::string& value,
                          const std::string& source_sentence) {
  return util::to_lower(detail_display_name) + ": " + value + ". " + source_sentence;
}

double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.dim() != b.dim()) {
    throw ValidationError("cosine over mismatched dimensions: " + std::to_string(a.dim()) +
                          " vs " + std::to_string(b.dim()));
  }
  double dot = 0.0;
  double na = 0.0;
  double nb = 0.0;
  for (size_t i = 0; i < a.dim(); ++i) {
    dot += a.values[i] * b.values[i];
    na += a.values[i] * a.values[i];
    nb += b.values[i] * b.values[i];
  }
  if (na == 0.0 || nb == 0.0) throw ValidationError("cosine is undefined for a zero vector");
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

std::vector<RankedPreference> retrieve(Gateway& gateway, const RetrievalQuery& query,
                                       const StoreSnapshot& snapshot,
                                       const RetrievalOptions& options) {
  if (util::trim(query.utterance).empty()) {
    throw ValidationError("retrieval utterance must be non-empty");
  }
  size_t k;
  if (query.dynamic_sub) {
    size_t n = 0;
    for (const auto& p : snapshot.preferences) {
      if (p.path.sub == *query.dynamic_sub) ++n;
    }
    k = n;
  } else {
    if (query.k <= 0) throw ValidationError("retrieval k must be positive");
    k = static_cast<size_t>(query.k);
  }
  if (k == 0 || snapshot.preferences.empty()) return {};

  // The query embeds the raw utterance; only stored preferences are enriched.
  EmbeddingVector query_embedding = gateway.embed(query.utterance, options.embedding_model);

  std::vector<RankedPreference> ranked;
  ranked.reserve(snapshot.preferences.size());
  for (const auto& p : snapshot.preferences) {
    ranked.push_back(RankedPreference{p, cosine(query_embedding, p.embedding)});
  }
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const RankedPreference& x, const RankedPreference& y) {
                     if (x.score != y.score) return x.score > y.score;
                     if (x.preference.created_at != y.preference.created_at) {
                       return x.preference.created_at < y.preference.created_at;
                     }
                     return x.preference.id < y.preference.id;
                   });
  if (options.apply_floor) {
    std::erase_if(ranked,
                  [&](const RankedPreference& r) { return r.score < options.score_floor; });
  }
  if (ranked.size() > k) ranked.resize(k);
  return ranked;
}

std::map<int, double> topk_accuracy(const std::vector<QueryOutcome>& outcomes,
                                    const std::vector<int>& offsets) {
  std::map<int, double> accuracy;
  for (int offset : offsets) {
    if (outcomes.empty()) {
      accuracy[offset] = 0.0;
      continue;
    }
    size_t hits = 0;
    for (const auto& q : outcomes) {
      const size_t limit = static_cast<size_t>(std::max(0, q.n + offset));
      for (size_t i = 0; i < q.ranked_ids.size() && i < limit; ++i) {
        if (q.ranked_ids[i] == q.ground_truth_id) {
          ++hits;
          break;
        }
      }
    }
    accuracy[offset] = static_cast<double>(hits) / static_cast<double>(outcomes.size());
  }
  return accuracy;
}

}  // namespace prefmem
