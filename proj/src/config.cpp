#include "prefmem/config.hpp"

#include <cstdlib>
#include <regex>

#include "prefmem/errors.hpp"
#include "prefmem/http_backend.hpp"
#include "prefmem/mock_backend.hpp"
#include "prefmem/util.hpp"

namespace prefmem {

using nlohmann::json;

void ServiceConfig::validate() const {
  static const std::regex listen_pattern(R"(^[A-Za-z0-9_.-]+:\d{1,5}$)");
  if (!std::regex_match(listen_address, listen_pattern)) {
    throw ValidationError("listen_address must be host:port, got \"" + listen_address + "\"");
  }
  if (retrieval_k <= 0) throw ValidationError("retrieval k must be positive");
  if (gateway.embedding_dim == 0) throw ValidationError("embedding_dim must be positive");
  if (!gateway.mock && gateway.api_key.empty()) {
    throw ValidationError("live gateway needs an API key (config or $" + gateway.api_key_env +
                          ")");
  }
  if (taxonomy_file.empty()) throw ValidationError("taxonomy_file must be set");
}

ServiceConfig ServiceConfig::from_json(const json& j) {
  ServiceConfig c;
  c.listen_address = j.value("listen_address", c.listen_address);
  c.storage_root = j.value("storage_root", c.storage_root.string());
  c.taxonomy_file = j.value("taxonomy_file", c.taxonomy_file.string());
  c.retrieval_k = j.value("retrieval_k", c.retrieval_k);
  c.score_floor = j.value("score_floor", c.score_floor);
  c.bearer_token = j.value("bearer_token", c.bearer_token);
  if (j.contains("gateway")) {
    const json& g = j.at("gateway");
    c.gateway.mock = g.value("mock", c.gateway.mock);
    c.gateway.base_url = g.value("base_url", c.gateway.base_url);
    c.gateway.api_key_env = g.value("api_key_env", c.gateway.api_key_env);
    c.gateway.chat_model = g.value("chat_model", c.gateway.chat_model);
    c.gateway.embedding_model = g.value("embedding_model", c.gateway.embedding_model);
    c.gateway.embedding_dim = g.value("embedding_dim", c.gateway.embedding_dim);
    c.gateway.mock_playbook = g.value("mock_playbook", c.gateway.mock_playbook);
    c.gateway.max_transport_retries =
        g.value("max_transport_retries", c.gateway.max_transport_retries);
    c.gateway.backoff_initial_ms = g.value("backoff_initial_ms", c.gateway.backoff_initial_ms);
    c.gateway.rate_per_second = g.value("rate_per_second", c.gateway.rate_per_second);
  }
  return c;
}

json ServiceConfig::to_json() const {
  return json{{"listen_address", listen_address},
              {"storage_root", storage_root.string()},
              {"taxonomy_file", taxonomy_file.string()},
              {"retrieval_k", retrieval_k},
              {"score_floor", score_floor},
              {"gateway",
               {{"mock", gateway.mock},
                {"base_url", gateway.base_url},
                {"api_key_env", gateway.api_key_env},
                {"chat_model", gateway.chat_model},
                {"embedding_model", gateway.embedding_model},
                {"embedding_dim", gateway.embedding_dim},
                {"mock_playbook", gateway.mock_playbook},
                {"max_transport_retries", gateway.max_transport_retries},
                {"backoff_initial_ms", gateway.backoff_initial_ms},
                {"rate_per_second", gateway.rate_per_second}}}};
}

ServiceConfig load_config_file(const std::filesystem::path& path) {
  json doc;
  try {
    doc = json::parse(util::read_text_file(path.string()));
  } catch (const json::parse_error& e) {
    throw ParseError("config file does not parse: " + std::string(e.what()));
  }
  ServiceConfig c = ServiceConfig::from_json(doc);
  // Secrets come from the environment, never from the config file.
  if (const char* key = std::getenv(c.gateway.api_key_env.c_str())) {
    c.gateway.api_key = key;
  }
  if (const char* token = std::getenv("PREFMEM_BEARER_TOKEN")) {
    c.bearer_token = token;
  }
  return c;
}

std::shared_ptr<ChatBackend> make_backend(const GatewayConfig& config,
                                          const LiveBackendFactory& live_factory) {
  if (config.mock) {
    MockOptions options;
    options.embedding_dim = config.embedding_dim;
    auto mock = std::make_shared<MockBackend>(options);
    if (!config.mock_playbook.empty()) mock->load_playbook_file(config.mock_playbook);
    return mock;
  }
  if (live_factory) return live_factory(config);
  HttpBackendConfig http;
  http.base_url = config.base_url;
  http.api_key = config.api_key;
  http.embedding_dim = config.embedding_dim;
  return std::make_shared<HttpBackend>(std::move(http));
}

std::unique_ptr<Gateway> make_gateway(const GatewayConfig& config,
                                      const LiveBackendFactory& live_factory) {
  GatewayOptions options;
  options.max_transport_retries = config.max_transport_retries;
  options.backoff_initial_ms = config.backoff_initial_ms;
  options.rate_per_second = config.rate_per_second;
  return std::make_unique<Gateway>(make_backend(config, live_factory), options);
}

}  // namespace prefmem
