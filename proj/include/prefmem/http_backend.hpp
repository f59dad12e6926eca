#pragma once

#include <memory>
#include <string>

#include "prefmem/gateway.hpp"

namespace prefmem {

struct HttpBackendConfig {
  std::string base_url;  // e.g. "https://api.example.com/v1"
  std::string api_key;
  size_t embedding_dim = 0;  // 0 skips the dimension check
  double connect_timeout_s = 10.0;
  double read_timeout_s = 120.0;
};

// Serialized request body for the chat-completions wire protocol. Tool
// definitions are spliced in verbatim: the bytes sent equal the bytes the
// schema compiler produced.
std::string build_chat_body(const ChatRequest& request);

// OpenAI-compatible chat-completions + embeddings client.
class HttpBackend : public ChatBackend {
 public:
  explicit HttpBackend(HttpBackendConfig config);
  ~HttpBackend() override;

  std::vector<ToolCall> chat(const ChatRequest& request) override;
  EmbeddingVector embed(const std::string& text, const std::string& model_id) override;
  std::string name() const override { return "http"; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace prefmem
