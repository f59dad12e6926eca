#include "prefmem/http_backend.hpp"

#include <cstdlib>
#include <iostream>
#include <regex>

#include "httplib.h"
#include "json.hpp"
#include "prefmem/errors.hpp"

namespace prefmem {

using nlohmann::json;

std::string build_chat_body(const ChatRequest& request) {
  json body;
  body["model"] = request.model;
  body["temperature"] = request.temperature;
  json messages = json::array();
  for (const auto& m : request.messages) {
    messages.push_back({{"role", m.role}, {"content", m.text}});
  }
  body["messages"] = std::move(messages);
  if (request.tool_choice) {
    body["tool_choice"] = {{"type", "function"}, {"function", {{"name", *request.tool_choice}}}};
  }
  std::string out = body.dump();
  if (!request.tools.empty()) {
    std::string tools = ",\"tools\":[";
    for (size_t i = 0; i < request.tools.size(); ++i) {
      if (i) tools.push_back(',');
      tools += request.tools[i];
    }
    tools.push_back(']');
    out.insert(out.size() - 1, tools);
  }
  return out;
}

namespace {

bool debug_enabled() {
  static const bool enabled = std::getenv("PREFMEM_DEBUG") != nullptr;
  return enabled;
}

void debug_log(const std::string& direction, const std::string& payload) {
  if (!debug_enabled()) return;
  // Secrets never reach the body, only the Authorization header, which is
  // not logged; still redact anything that looks like a bearer token.
  static const std::regex bearer("Bearer [A-Za-z0-9._-]+");
  std::cerr << "[prefmem.http] " << direction << " "
            << std::regex_replace(payload, bearer, "Bearer <redacted>") << "\n";
}

// Splits "https://host:port/prefix" into client target and path prefix.
struct ParsedUrl {
  std::string origin;
  std::string prefix;
};

ParsedUrl parse_base_url(const std::string& base_url) {
  static const std::regex pattern(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(base_url, m, pattern)) {
    throw TransportError("malformed endpoint URL: " + base_url);
  }
  ParsedUrl p;
  p.origin = m[1];
  p.prefix = m[2].matched ? m[2].str() : "";
  while (!p.prefix.empty() && p.prefix.back() == '/') p.prefix.pop_back();
  return p;
}

}  // namespace

struct HttpBackend::Impl {
  HttpBackendConfig config;
  ParsedUrl url;
  std::unique_ptr<httplib::Client> client;

  explicit Impl(HttpBackendConfig cfg) : config(std::move(cfg)), url(parse_base_url(config.base_url)) {
    client = std::make_unique<httplib::Client>(url.origin);
    client->set_connection_timeout(std::chrono::duration<double>(config.connect_timeout_s));
    client->set_read_timeout(std::chrono::duration<double>(config.read_timeout_s));
  }

  json post(const std::string& path, const std::string& body) {
    httplib::Headers headers;
    if (!config.api_key.empty()) {
      headers.emplace("Authorization", "Bearer " + config.api_key);
    }
    debug_log("-> POST " + url.prefix + path, body);
    auto res = client->Post(url.prefix + path, headers, body, "application/json");
    if (!res) {
      throw TransportError("transport failure calling " + path + ": " +
                           httplib::to_string(res.error()));
    }
    debug_log("<- " + std::to_string(res->status), res->body);
    if (res->status == 401 || res->status == 403) {
      throw AuthError("endpoint rejected credentials (HTTP " + std::to_string(res->status) + ")");
    }
    if (res->status == 429 || res->status >= 500) {
      throw TransportError("endpoint returned HTTP " + std::to_string(res->status));
    }
    if (res->status != 200) {
      throw ProtocolError("endpoint returned HTTP " + std::to_string(res->status) + ": " +
                          res->body);
    }
    try {
      return json::parse(res->body);
    } catch (const json::parse_error& e) {
      throw ProtocolError("endpoint response is not valid JSON: " + std::string(e.what()));
    }
  }
};

HttpBackend::HttpBackend(HttpBackendConfig config) : impl_(std::make_unique<Impl>(std::move(config))) {}

HttpBackend::~HttpBackend() = default;

std::vector<ToolCall> HttpBackend::chat(const ChatRequest& request) {
  json res = impl_->post("/chat/completions", build_chat_body(request));
  std::vector<ToolCall> calls;
  if (!res.contains("choices") || res["choices"].empty()) {
    throw ProtocolError("chat response carries no choices");
  }
  const json& message = res["choices"][0].value("message", json::object());
  for (const auto& tc : message.value("tool_calls", json::array())) {
    const json& fn = tc.value("function", json::object());
    std::string arguments;
    if (fn.contains("arguments")) {
      const json& a = fn.at("arguments");
      arguments = a.is_string() ? a.get<std::string>() : a.dump();
    }
    calls.push_back(ToolCall{fn.value("name", ""), std::move(arguments)});
  }
  if (calls.empty() && request.tool_choice) {
    throw ProtocolError("response missing tool call for forced tool \"" + *request.tool_choice +
                        "\"");
  }
  return calls;
}

EmbeddingVector HttpBackend::embed(const std::string& text, const std::string& model_id) {
  json body = {{"model", model_id}, {"input", text}};
  json res = impl_->post("/embeddings", body.dump());
  if (!res.contains("data") || res["data"].empty() || !res["data"][0].contains("embedding")) {
    throw ProtocolError("embedding response carries no data");
  }
  EmbeddingVector v;
  v.model_id = model_id;
  v.values = res["data"][0]["embedding"].get<std::vector<double>>();
  if (impl_->config.embedding_dim != 0 && v.dim() != impl_->config.embedding_dim) {
    throw ProtocolError("embedding dimension " + std::to_string(v.dim()) +
                        " does not match configured " +
                        std::to_string(impl_->config.embedding_dim));
  }
  return v;
}

}  // namespace prefmem
