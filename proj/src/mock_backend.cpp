#include "prefmem/mock_backend.hpp"

#include <cmath>

#include "prefmem/errors.hpp"
#include "prefmem/schema.hpp"
#include "prefmem/util.hpp"

namespace prefmem {

using nlohmann::json;

MockBackend::MockBackend(MockOptions options) : options_(options) {
  if (options_.embedding_dim == 0) {
    throw ValidationError("mock embedding dimension must be positive");
  }
}

void MockBackend::add_rule(MockRule rule) { rules_.push_back(std::move(rule)); }

void MockBackend::load_playbook(const json& doc) {
  if (!doc.is_object() || !doc.contains("extraction_rules")) {
    throw ParseError("mock playbook must be an object with \"extraction_rules\"");
  }
  for (const auto& r : doc.at("extraction_rules")) {
    MockRule rule;
    rule.match = r.at("match").get<std::string>();
    rule.path = CategoryPath{r.at("main").get<std::string>(), r.at("sub").get<std::string>(),
                             r.at("detail").get<std::string>()};
    rule.value = r.at("value").get<std::string>();
    rule.sentence = r.at("sentence").get<std::string>();
    add_rule(std::move(rule));
  }
}

void MockBackend::load_playbook_file(const std::filesystem::path& path) {
  json doc;
  try {
    doc = json::parse(util::read_text_file(path.string()));
  } catch (const json::parse_error& e) {
    throw ParseError("mock playbook does not parse: " + std::string(e.what()));
  }
  load_playbook(doc);
}

size_t MockBackend::token_bucket(const std::string& token, size_t dim) {
  return static_cast<size_t>(util::fnv1a64(token) % static_cast<uint64_t>(dim));
}

bool MockBackend::sentence_is_negated(const std::string& sentence) {
  static const char* kNegations[] = {"no longer", "anymore",     "any more", "don't",
                                     "do not",    "doesn't",     "does not", "stopped",
                                     "never again", "i'm done with", "cancelled"};
  for (const char* n : kNegations) {
    if (util::icontains(sentence, n)) return true;
  }
  return false;
}

namespace {

std::string user_text(const ChatRequest& request) {
  std::string text;
  for (const auto& m : request.messages) {
    if (m.role == "user") {
      text += m.text;
      text += "\n";
    }
  }
  return text;
}

// Extracts the last fenced ```json block from the request's user text.
std::optional<json> context_block(const std::string& text) {
  const std::string open = "```json\n";
  const std::string close = "\n```";
  size_t start = text.rfind(open);
  if (start == std::string::npos) return std::nullopt;
  start += open.size();
  size_t end = text.find(close, start);
  if (end == std::string::npos) return std::nullopt;
  try {
    return json::parse(text.substr(start, end - start));
  } catch (const json::parse_error&) {
    return std::nullopt;
  }
}

const json* schema_leaf(const json& tool, const CategoryPath& path) {
  const json* node = tool.contains("function") ? &tool.at("function") : &tool;
  if (!node->contains("parameters")) return nullptr;
  node = &node->at("parameters");
  for (const std::string& key : {path.main, path.sub, path.detail}) {
    if (!node->contains("properties")) return nullptr;
    const json& props = node->at("properties");
    if (!props.contains(key)) return nullptr;
    node = &props.at(key);
  }
  return node;
}

}  // namespace

std::vector<ToolCall> MockBackend::chat(const ChatRequest& request) {
  std::vector<std::string> tool_names;
  std::vector<json> tools;
  for (const auto& raw : request.tools) {
    json t;
    try {
      t = json::parse(raw);
    } catch (const json::parse_error& e) {
      throw ProtocolError("mock received an unparseable tool definition: " + std::string(e.what()));
    }
    tool_names.push_back(t.contains("function") ? t.at("function").value("name", "")
                                                : t.value("name", ""));
    tools.push_back(std::move(t));
  }

  for (size_t i = 0; i < tool_names.size(); ++i) {
    if (tool_names[i] == kExtractionFunctionName) {
      return {answer_extraction(request, tools[i])};
    }
  }
  return {answer_maintenance(request, tool_names)};
}

ToolCall MockBackend::answer_extraction(const ChatRequest& request, const json& tool) const {
  const std::string haystack = user_text(request);
  json args = json::object();
  for (const auto& rule : rules_) {
    if (haystack.find(rule.match) == std::string::npos) continue;
    const json* leaf = schema_leaf(tool, rule.path);
    if (!leaf) continue;  // category not in this schema; honor the opt-out
    json record = {{kFieldValue, rule.value}, {kFieldSourceSentence, rule.sentence}};
    json& main_node = args[rule.path.main];
    if (!main_node.is_object()) main_node = json::object();
    json& sub_node = main_node[rule.path.sub];
    if (!sub_node.is_object()) sub_node = json::object();
    const bool is_array_leaf = leaf->value("type", "object") == "array";
    if (is_array_leaf) {
      sub_node[rule.path.detail].push_back(std::move(record));
    } else if (!sub_node.contains(rule.path.detail)) {
      sub_node[rule.path.detail] = std::move(record);
    }
  }
  return ToolCall{kExtractionFunctionName, args.dump()};
}

ToolCall MockBackend::answer_maintenance(const ChatRequest& request,
                                         const std::vector<std::string>& tool_names) const {
  auto has_tool = [&](const char* name) {
    for (const auto& t : tool_names) {
      if (t == name) return true;
    }
    return false;
  };

  auto ctx = context_block(user_text(request));
  if (!ctx) throw ProtocolError("mock maintenance request carries no context block");
  const json& candidate = ctx->at("candidate");
  const json& existing = ctx->at("existing");
  const std::string value = util::collapse_whitespace(candidate.value("value", ""));
  const std::string sentence = candidate.value("sentence", "");

  auto call = [](const char* name, const std::string& id) {
    json args = json::object();
    if (!id.empty()) args["existing_preference_id"] = id;
    return ToolCall{name, args.dump()};
  };

  std::string equal_id;
  for (const auto& e : existing) {
    if (util::iequals(util::collapse_whitespace(e.value("value", "")), value)) {
      equal_id = e.value("id", "");
      break;
    }
  }
  const bool negated = sentence_is_negated(sentence);
  if (!equal_id.empty() && !negated) return call("pass", equal_id);
  if (negated) {
    std::string target = equal_id;
    if (target.empty()) {
      for (const auto& e : existing) {
        if (util::icontains(sentence, e.value("value", ""))) {
          target = e.value("id", "");
          break;
        }
      }
    }
    if (!target.empty() && has_tool("update")) return call("update", target);
  }
  if (has_tool("append")) return call("append", "");
  if (!existing.empty() && has_tool("update")) {
    return call("update", existing.front().value("id", ""));
  }
  return call("append", "");
}

EmbeddingVector MockBackend::embed(const std::string& text, const std::string& model_id) {
  std::vector<double> values(options_.embedding_dim, 0.0);
  for (const auto& token : util::tokenize(text)) {
    values[token_bucket(token, options_.embedding_dim)] += 1.0;
  }
  double norm_sq = 0.0;
  for (double v : values) norm_sq += v * v;
  if (norm_sq > 0.0) {
    double inv = 1.0 / std::sqrt(norm_sq);
    for (double& v : values) v *= inv;
  }
  return EmbeddingVector{std::move(values), model_id};
}

}  // namespace prefmem
