#pragma once

#include <map>
#include <string>

#include "json.hpp"
#include "prefmem/taxonomy.hpp"

namespace prefmem {

// Parameter slot that absorbs out-of-category content; always discarded downstream.
inline constexpr const char* kSentinelParameter = "no_or_other_preference";

inline constexpr const char* kExtractionFunctionName = "extract_user_preference";

// Record shape the model fills per extracted preference.
inline constexpr const char* kFieldSourceSentence = "user_sentence_preference_revealed";
inline constexpr const char* kFieldValue = "user_preference";

// Tool-calling schema compiled from a taxonomy. The parameter tree mirrors
// the hierarchy one-to-one: one object per main and sub category, one leaf
// per detail category (array of records for MP, single record for SP), and
// one sentinel parameter inside every main and sub object. No parameter is
// required. Immutable after compilation.
struct CompiledSchema {
  struct Leaf {
    CategoryPath path;
    DetailType type = DetailType::MP;
    std::string display_name;
  };

  std::string function_name;
  std::string function_description;
  nlohmann::json parameter_tree;  // JSON-schema object
  std::string taxonomy_version;

  // main id -> sub id -> detail id -> leaf
  std::map<std::string, std::map<std::string, std::map<std::string, Leaf>>> mirror;
  // detail id -> path (identifiers are unique per level, so this is injective)
  std::map<std::string, CategoryPath> detail_index;

  bool has_main(const std::string& main_id) const { return mirror.count(main_id) > 0; }
  bool has_sub(const std::string& main_id, const std::string& sub_id) const;
  const Leaf* find_leaf(const std::string& main_id, const std::string& sub_id,
                        const std::string& detail_id) const;

  size_t main_parameter_count() const { return mirror.size(); }
  size_t sub_parameter_count() const;
  size_t leaf_count() const;
  size_t sentinel_count() const;  // one per main object plus one per sub object

  // Full tool definition for the chat wire protocol.
  nlohmann::json tool_definition() const;
  // Canonical serialized form; the gateway sends these bytes unchanged.
  std::string serialize_tool() const;
};

CompiledSchema compile_schema(const CategoryTaxonomy& taxonomy);

}  // namespace prefmem
