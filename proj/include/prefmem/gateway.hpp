#pragma once

#include <atomic>
#include <chrono>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace prefmem {

struct ChatMessage {
  std::string role;  // "system" | "user" | "assistant"
  std::string text;
};

struct ChatRequest {
  std::vector<ChatMessage> messages;
  std::vector<std::string> tools;  // serialized tool definitions, sent byte-for-byte
  std::optional<std::string> tool_choice;  // forced tool name
  double temperature = 0.0;
  std::string model;
};

struct ToolCall {
  std::string tool_name;
  std::string arguments_document;  // retained verbatim for validity accounting
};

struct EmbeddingVector {
  std::vector<double> values;
  std::string model_id;

  size_t dim() const { return values.size(); }
};

// Chat-completion + embedding backend. Implementations: live HTTP client,
// deterministic offline mock, test doubles.
class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual std::vector<ToolCall> chat(const ChatRequest& request) = 0;
  virtual EmbeddingVector embed(const std::string& text, const std::string& model_id) = 0;
  virtual std::string name() const = 0;
};

// Shared token bucket; rate <= 0 disables limiting.
class RateLimiter {
 public:
  RateLimiter(double per_second, double burst);
  void acquire();

 private:
  std::mutex mutex_;
  double per_second_;
  double burst_;
  double tokens_;
  std::chrono::steady_clock::time_point last_;
};

struct GatewayOptions {
  int max_transport_retries = 2;  // transport failures only; bad payloads are never retried
  double backoff_initial_ms = 100.0;
  double rate_per_second = 0.0;  // 0 disables the token bucket
  double rate_burst = 4.0;
  bool sleep_in_backoff = true;  // tests disable to keep retries instant
};

// Uniform front over a backend: bounded transport retries with exponential
// backoff, shared rate limiting, call accounting. Payloads pass through
// untouched in both directions. Stateless per request.
class Gateway {
 public:
  explicit Gateway(std::shared_ptr<ChatBackend> backend, GatewayOptions options = {});

  // Pre: at least one tool defined.
  std::vector<ToolCall> chat_with_tools(const ChatRequest& request);

  // Pre: text non-empty. Deterministic on the mock backend.
  EmbeddingVector embed(const std::string& text, const std::string& model_id);

  size_t chat_call_count() const { return chat_calls_.load(); }
  size_t embed_call_count() const { return embed_calls_.load(); }
  const ChatBackend& backend() const { return *backend_; }

 private:
  std::shared_ptr<ChatBackend> backend_;
  GatewayOptions options_;
  RateLimiter limiter_;
  std::atomic<size_t> chat_calls_{0};
  std::atomic<size_t> embed_calls_{0};
};

}  // namespace prefmem
