#include "prefmem/gateway.hpp"

#include <cmath>
#include <thread>

#include "prefmem/errors.hpp"

namespace prefmem {

RateLimiter::RateLimiter(double per_second, double burst)
    : per_second_(per_second),
      burst_(burst < 1.0 ? 1.0 : burst),
      tokens_(burst_),
      last_(std::chrono::steady_clock::now()) {}

void RateLimiter::acquire() {
  if (per_second_ <= 0.0) return;
  std::unique_lock<std::mutex> lock(mutex_);
  for (;;) {
    auto now = std::chrono::steady_clock::now();
    double elapsed = std::chrono::duration<double>(now - last_).count();
    last_ = now;
    tokens_ = std::min(burst_, tokens_ + elapsed * per_second_);
    if (tokens_ >= 1.0) {
      tokens_ -= 1.0;
      return;
    }
    double wait_s = (1.0 - tokens_) / per_second_;
    lock.unlock();
    std::this_thread::sleep_for(std::chrono::duration<double>(wait_s));
    lock.lock();
  }
}

Gateway::Gateway(std::shared_ptr<ChatBackend> backend, GatewayOptions options)
    : backend_(std::move(backend)),
      options_(options),
      limiter_(options.rate_per_second, options.rate_burst) {}

namespace {

template <typename Fn>
auto with_transport_retries(Fn&& fn, const GatewayOptions& opts) {
  int attempt = 0;
  for (;;) {
    try {
      return fn();
    } catch (const TransportError&) {
      if (attempt >= opts.max_transport_retries) throw;
      if (opts.sleep_in_backoff) {
        double delay_ms = opts.backoff_initial_ms * std::pow(2.0, attempt);
        std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(delay_ms));
      }
      ++attempt;
    }
  }
}

}  // namespace

std::vector<ToolCall> Gateway::chat_with_tools(const ChatRequest& request) {
  if (request.tools.empty()) {
    throw ValidationError("chat_with_tools requires at least one tool definition");
  }
  limiter_.acquire();
  chat_calls_.fetch_add(1);
  return with_transport_retries([&] { return backend_->chat(request); }, options_);
}

EmbeddingVector Gateway::embed(const std::string& text, const std::string& model_id) {
  if (text.empty()) throw ValidationError("cannot embed empty text");
  limiter_.acquire();
  embed_calls_.fetch_add(1);
  EmbeddingVector v =
      with_transport_retries([&] { return backend_->embed(text, model_id); }, options_);
  for (double x : v.values) {
    if (!std::isfinite(x)) throw ProtocolError("embedding contains non-finite entries");
  }
  return v;
}

}  // namespace prefmem
