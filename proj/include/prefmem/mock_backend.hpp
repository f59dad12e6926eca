#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "prefmem/gateway.hpp"
#include "prefmem/taxonomy.hpp"

namespace prefmem {

// One entry of the mock responder's rule table. A rule fires when `match`
// occurs in the user-role text of the request; the mock then extracts
// (path, value, sentence), provided the path exists in the tool schema it
// was handed. Rules are authored from fixture ground-truth labels.
struct MockRule {
  std::string match;
  CategoryPath path;
  std::string value;
  std::string sentence;
};

struct MockOptions {
  size_t embedding_dim = 256;
};

// Deterministic offline backend.
//
// Extraction requests are answered from the rule table, honoring the exact
// tool schema on the wire: a rule whose category is absent from the schema
// contributes nothing. Maintenance requests are answered by keyword rules
// over the context block (equal value -> pass, negated sentence -> update,
// otherwise append when available, else update).
//
// Embeddings hash each lowercase token into one of `embedding_dim` buckets,
// count occurrences and L2-normalize, so identical inputs give identical
// vectors on every platform and token-disjoint texts score cosine 0 unless
// buckets collide.
class MockBackend : public ChatBackend {
 public:
  explicit MockBackend(MockOptions options = {});

  void add_rule(MockRule rule);
  void load_playbook(const nlohmann::json& doc);
  void load_playbook_file(const std::filesystem::path& path);

  std::vector<ToolCall> chat(const ChatRequest& request) override;
  EmbeddingVector embed(const std::string& text, const std::string& model_id) override;
  std::string name() const override { return "mock"; }

  static size_t token_bucket(const std::string& token, size_t dim);
  static bool sentence_is_negated(const std::string& sentence);

 private:
  ToolCall answer_extraction(const ChatRequest& request, const nlohmann::json& tool) const;
  ToolCall answer_maintenance(const ChatRequest& request,
                              const std::vector<std::string>& tool_names) const;

  MockOptions options_;
  std::vector<MockRule> rules_;
};

}  // namespace prefmem
