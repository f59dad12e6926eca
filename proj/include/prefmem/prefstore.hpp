#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "prefmem/extraction.hpp"
#include "prefmem/gateway.hpp"
#include "prefmem/taxonomy.hpp"

namespace prefmem {

struct Preference {
  std::string id;
  std::string user_id;
  CategoryPath path;
  std::string value;
  std::string source_sentence;
  EmbeddingVector embedding;  // enriched form
  std::string created_at;
  std::string updated_at;
  std::string origin_conversation_id;
  std::string taxonomy_version;

  nlohmann::json to_json() const;
  static Preference from_json(const nlohmann::json& j);
};

// Consistent point-in-time view of one user's live preferences.
struct StoreSnapshot {
  std::string user_id;
  std::vector<Preference> preferences;
  std::string taxonomy_version;
};

struct StoreOptions {
  size_t embedding_dim = 256;
  std::function<std::string()> clock;          // defaults to wall-clock UTC
  double idempotency_ttl_hours = 24.0;
};

// Per-user preference storage. Each user has an append-only JSONL mutation
// log under <root>/users/, compacted when first opened; an in-memory index
// is rebuilt on load. Preferences whose paths no longer resolve in the
// active taxonomy are quarantined, not deleted. Writers are serialized per
// user; readers work from snapshots.
class PreferenceStore {
 public:
  PreferenceStore(std::filesystem::path root, const CategoryTaxonomy& taxonomy,
                  StoreOptions options = {});

  // Durable before return. The store never deduplicates; maintenance owns
  // that policy.
  Preference insert(const std::string& user_id, const CandidatePreference& candidate,
                    const EmbeddingVector& embedding);

  // Returns whether the preference existed.
  bool erase(const std::string& user_id, const std::string& preference_id);

  std::optional<Preference> get(const std::string& user_id, const std::string& preference_id) const;

  // Stored preferences with exactly this 3-level path, insertion-ordered.
  std::vector<Preference> by_detail_category(const std::string& user_id,
                                             const CategoryPath& path) const;

  // Deletes every preference under the sub-category tree; returns the count.
  size_t purge_category(const std::string& user_id, const std::string& sub_category_id);

  // Number of live preferences within the sub-category.
  size_t count_by_subcategory(const std::string& user_id,
                              const std::string& sub_category_id) const;

  StoreSnapshot snapshot(const std::string& user_id) const;
  size_t size(const std::string& user_id) const;
  std::vector<std::string> users() const;
  std::vector<Preference> quarantined(const std::string& user_id) const;

  // Per-user opt-out state, persisted alongside preferences. Adding opt-outs
  // purges the affected sub-trees and records the exclusion for future
  // schema compilation.
  size_t add_opt_outs(const std::string& user_id, const std::vector<std::string>& sub_ids);
  std::set<std::string> opt_outs(const std::string& user_id) const;

  // Idempotency markers for conversation ingestion.
  std::optional<nlohmann::json> idempotent_response(const std::string& user_id,
                                                    const std::string& key) const;
  void remember_idempotent(const std::string& user_id, const std::string& key,
                           const nlohmann::json& response);

  // Full user export/import as one structured document.
  nlohmann::json export_user(const std::string& user_id) const;
  void import_user(const nlohmann::json& doc);

  const std::filesystem::path& root() const { return root_; }

 private:
  struct UserData;
  std::shared_ptr<UserData> user_data(const std::string& user_id) const;
  std::filesystem::path log_path(const std::string& user_id) const;

  std::filesystem::path root_;
  const CategoryTaxonomy& taxonomy_;
  StoreOptions options_;
  mutable std::mutex users_mutex_;
  mutable std::map<std::string, std::shared_ptr<UserData>> users_;
};

}  // namespace prefmem
