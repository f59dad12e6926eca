#include "prefmem/schema.hpp"

#include "prefmem/util.hpp"

namespace prefmem {

using nlohmann::json;

bool CompiledSchema::has_sub(const std::string& main_id, const std::string& sub_id) const {
  auto it = mirror.find(main_id);
  return it != mirror.end() && it->second.count(sub_id) > 0;
}

const CompiledSchema::Leaf* CompiledSchema::find_leaf(const std::string& main_id,
                                                      const std::string& sub_id,
                                                      const std::string& detail_id) const {
  auto mit = mirror.find(main_id);
  if (mit == mirror.end()) return nullptr;
  auto sit = mit->second.find(sub_id);
  if (sit == mit->second.end()) return nullptr;
  auto dit = sit->second.find(detail_id);
  if (dit == sit->second.end()) return nullptr;
  return &dit->second;
}

size_t CompiledSchema::sub_parameter_count() const {
  size_t n = 0;
  for (const auto& [_, subs] : mirror) n += subs.size();
  return n;
}

size_t CompiledSchema::leaf_count() const {
  size_t n = 0;
  for (const auto& [_, subs] : mirror) {
    for (const auto& [__, details] : subs) n += details.size();
  }
  return n;
}

size_t CompiledSchema::sentinel_count() const {
  return main_parameter_count() + sub_parameter_count();
}

json CompiledSchema::tool_definition() const {
  return json{{"type", "function"},
              {"function",
               {{"name", function_name},
                {"description", function_description},
                {"parameters", parameter_tree}}}};
}

std::string CompiledSchema::serialize_tool() const { return tool_definition().dump(); }

namespace {

json record_schema() {
  return json{{"type", "object"},
              {"properties",
               {{kFieldSourceSentence,
                 {{"type", "string"},
                  {"description", "user sentence where the user revealed the preference."}}},
                {kFieldValue,
                 {{"type", "string"}, {"description", "The preference of the user."}}}}}};
}

json sentinel_schema() {
  json s;
  s["type"] = "array";
  s["description"] =
      "Preferences the user revealed that do not fit any other parameter at this level.";
  s["items"] = record_schema();
  return s;
}

json leaf_schema(const DetailCategory& d) {
  const std::vector<std::string>& examples = d.examples.empty() ? d.attributes : d.examples;
  json leaf;
  if (d.type == DetailType::MP) {
    leaf["type"] = "array";
    leaf["items"] = record_schema();
  } else {
    leaf = record_schema();
  }
  leaf["description"] = "The user's preference for '" + d.display_name + "'.";
  leaf["examples"] = examples;
  return leaf;
}

}  // namespace

CompiledSchema compile_schema(const CategoryTaxonomy& taxonomy) {
  taxonomy.validate();

  CompiledSchema schema;
  schema.function_name = kExtractionFunctionName;
  schema.function_description =
      "A function that extracts personal preferences of the user from a conversation "
      "between the user and the assistant. Every parameter is optional; fill in only "
      "preferences the user clearly revealed.";
  schema.taxonomy_version = taxonomy.version;

  json root;
  root["type"] = "object";
  json root_props = json::object();
  for (const auto& m : taxonomy.mains) {
    json main_props = json::object();
    main_props[kSentinelParameter] = sentinel_schema();
    for (const auto& s : m.subs) {
      json sub_props = json::object();
      sub_props[kSentinelParameter] = sentinel_schema();
      for (const auto& d : s.details) {
        sub_props[d.id] = leaf_schema(d);
        CompiledSchema::Leaf leaf;
        leaf.path = CategoryPath{m.id, s.id, d.id};
        leaf.type = d.type;
        leaf.display_name = d.display_name;
        schema.mirror[m.id][s.id][d.id] = leaf;
        schema.detail_index[d.id] = leaf.path;
      }
      json sub_node;
      sub_node["type"] = "object";
      sub_node["description"] =
          "The user's preferences in the category '" + s.display_name + "'.";
      sub_node["properties"] = std::move(sub_props);
      main_props[s.id] = std::move(sub_node);
      schema.mirror[m.id];  // keep mains with no subs addressable
    }
    json main_node;
    main_node["type"] = "object";
    main_node["description"] =
        "The user's preferences in the category '" + m.display_name + "'.";
    main_node["properties"] = std::move(main_props);
    root_props[m.id] = std::move(main_node);
    schema.mirror[m.id];
  }
  root["properties"] = std::move(root_props);
  schema.parameter_tree = std::move(root);
  return schema;
}

}  // namespace prefmem
