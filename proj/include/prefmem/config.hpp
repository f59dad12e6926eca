#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <string>

#include "json.hpp"
#include "prefmem/gateway.hpp"

namespace prefmem {

struct GatewayConfig {
  bool mock = true;  // true => no network calls ever happen
  std::string base_url = "https://api.openai.com/v1";
  std::string api_key;                           // usually injected via api_key_env
  std::string api_key_env = "PREFMEM_API_KEY";   // environment variable for the secret
  std::string chat_model = "gpt-4o";
  std::string embedding_model = "text-embedding-ada-002";
  size_t embedding_dim = 256;
  std::string mock_playbook;  // optional rule table for the mock backend
  int max_transport_retries = 2;
  double backoff_initial_ms = 100.0;
  double rate_per_second = 0.0;  // 0 disables rate limiting
};

struct ServiceConfig {
  std::string listen_address = "127.0.0.1:8080";
  std::filesystem::path storage_root = "store";
  std::filesystem::path taxonomy_file = "data/taxonomy.json";
  GatewayConfig gateway;
  int retrieval_k = 3;        // production default
  double score_floor = -1.0;  // -1 disables the floor
  std::string bearer_token;   // empty => no auth; env PREFMEM_BEARER_TOKEN overrides

  void validate() const;
  static ServiceConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

// Reads the config file and applies environment overrides for secrets.
ServiceConfig load_config_file(const std::filesystem::path& path);

using LiveBackendFactory =
    std::function<std::shared_ptr<ChatBackend>(const GatewayConfig& config)>;

// Builds the backend for a gateway config. With mock enabled the live
// factory is never invoked, which tests use to prove no network path exists.
std::shared_ptr<ChatBackend> make_backend(const GatewayConfig& config,
                                          const LiveBackendFactory& live_factory = {});

std::unique_ptr<Gateway> make_gateway(const GatewayConfig& config,
                                      const LiveBackendFactory& live_factory = {});

}  // namespace prefmem
