#pragma once

#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "prefmem/config.hpp"
#include "prefmem/gateway.hpp"
#include "prefmem/prefstore.hpp"
#include "prefmem/taxonomy.hpp"

namespace prefmem {

// HTTP face of the memory lifecycle plus the handlers the CLI reuses.
//
//   POST   /v1/users/{id}/conversations       extract + maintain a transcript
//   POST   /v1/users/{id}/retrieve            rank stored preferences
//   GET    /v1/users/{id}/preferences         export
//   DELETE /v1/users/{id}/preferences/{pid}   delete one preference
//   POST   /v1/users/{id}/optout              purge + exclude sub-categories
//
// Opt-out is enforced twice per request: the schema is compiled without the
// user's excluded sub-trees, and candidates are still validated against the
// exclusions afterwards.
class Service {
 public:
  explicit Service(ServiceConfig config, const LiveBackendFactory& live_factory = {});
  // Test seam: run against an injected backend.
  Service(ServiceConfig config, std::shared_ptr<ChatBackend> backend);
  ~Service();

  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  // Binds (port 0 picks a free port), then serves on a background thread.
  // Returns the bound port.
  int start();
  void stop();

  nlohmann::json ingest_conversation(const std::string& user_id, const nlohmann::json& body,
                                     const std::string& idempotency_key = "");
  nlohmann::json retrieve_preferences(const std::string& user_id, const nlohmann::json& body);
  nlohmann::json list_preferences(const std::string& user_id);
  bool delete_preference(const std::string& user_id, const std::string& preference_id);
  nlohmann::json opt_out_user(const std::string& user_id, const std::vector<std::string>& subs);

  const CategoryTaxonomy& taxonomy() const;
  PreferenceStore& store();
  Gateway& gateway();
  const ServiceConfig& config() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Parses {"conversation_id": ..., "turns": [{"speaker","text"}...]}.
ConversationTranscript transcript_from_json(const nlohmann::json& body);

}  // namespace prefmem
