#include "doctest.h"

#include <cmath>
#include <set>

#include "json.hpp"
#include "prefmem/errors.hpp"
#include "prefmem/gateway.hpp"
#include "prefmem/http_backend.hpp"
#include "prefmem/mock_backend.hpp"
#include "prefmem/retrieval.hpp"
#include "test_support.hpp"

using namespace prefmem;
using nlohmann::json;

namespace {

// Fails a fixed number of times before answering; for retry-policy tests.
class FlakyBackend : public ChatBackend {
 public:
  explicit FlakyBackend(int failures) : failures_left_(failures) {}
  std::vector<ToolCall> chat(const ChatRequest&) override {
    ++attempts;
    if (failures_left_-- > 0) throw TransportError("flaky");
    return {ToolCall{"tool", "{}"}};
  }
  EmbeddingVector embed(const std::string&, const std::string& model) override {
    ++attempts;
    if (failures_left_-- > 0) throw TransportError("flaky");
    return EmbeddingVector{{1.0}, model};
  }
  std::string name() const override { return "flaky"; }
  int attempts = 0;

 private:
  int failures_left_;
};

ChatRequest tool_request() {
  ChatRequest r;
  r.tools.push_back(R"({"type":"function","function":{"name":"tool","parameters":{}}})");
  r.messages.push_back({"user", "hello"});
  return r;
}

}  // namespace

TEST_CASE("mock embeddings are deterministic") {
  MockBackend backend{MockOptions{256}};
  EmbeddingVector a = backend.embed("a", "m");
  EmbeddingVector b = backend.embed("a", "m");
  CHECK(a.values == b.values);
  CHECK(a.dim() == 256);
  CHECK(a.model_id == "m");
}

TEST_CASE("embedding empty text is rejected at the gateway") {
  Gateway gw(std::make_shared<MockBackend>(), testsupport::fast_gateway_options());
  CHECK_THROWS_AS(gw.embed("", "m"), ValidationError);
}

TEST_CASE("mock self-cosine is 1 within 1e-9") {
  MockBackend backend{MockOptions{256}};
  EmbeddingVector v = backend.embed("the quick brown fox jumps over the lazy dog", "m");
  CHECK(cosine(v, v) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("bucket-disjoint token sets have cosine exactly 0") {
  MockBackend backend{MockOptions{256}};
  // Verify the token sets land in disjoint buckets before asserting.
  std::set<size_t> left;
  for (const char* tok : {"alpha", "beta", "gamma"}) left.insert(MockBackend::token_bucket(tok, 256));
  std::set<size_t> right;
  for (const char* tok : {"delta", "epsilon"}) right.insert(MockBackend::token_bucket(tok, 256));
  bool disjoint = true;
  for (size_t b : right) {
    if (left.count(b)) disjoint = false;
  }
  REQUIRE(disjoint);
  EmbeddingVector a = backend.embed("alpha beta gamma", "m");
  EmbeddingVector b = backend.embed("delta epsilon", "m");
  CHECK(cosine(a, b) == 0.0);
}

TEST_CASE("shared tokens raise cosine over disjoint texts") {
  MockBackend backend{MockOptions{256}};
  EmbeddingVector stored = backend.embed(
      "traffic information source preferences: NavFlow. I always find NavFlow to be reliable.",
      "m");
  double topical = cosine(stored, backend.embed("traffic", "m"));
  double unrelated = cosine(stored, backend.embed("favorite cuisine Italian", "m"));
  CHECK(topical > unrelated);
  CHECK(topical > 0.0);
}

TEST_CASE("token order does not change the embedding") {
  MockBackend backend{MockOptions{256}};
  EmbeddingVector a = backend.embed("jazz music in the car", "m");
  EmbeddingVector b = backend.embed("car the in music jazz", "m");
  CHECK(a.values == b.values);
}

TEST_CASE("chat body carries tool definitions byte-for-byte") {
  ChatRequest r;
  r.model = "model-x";
  r.temperature = 0.0;
  r.messages.push_back({"system", "s"});
  r.messages.push_back({"user", "u"});
  const std::string tool =
      R"({"type":"function","function":{"name":"extract_user_preference","parameters":{"zeta":1,"alpha":2}}})";
  r.tools.push_back(tool);
  r.tool_choice = "extract_user_preference";

  std::string body = build_chat_body(r);
  CHECK(body.find(tool) != std::string::npos);  // unsorted key order preserved
  json parsed = json::parse(body);
  CHECK(parsed.at("temperature") == 0.0);
  CHECK(parsed.at("model") == "model-x");
  CHECK(parsed.at("tool_choice").at("function").at("name") == "extract_user_preference");
  CHECK(parsed.at("messages").size() == 2);
}

TEST_CASE("transport failures are retried at most twice") {
  SUBCASE("two failures then success") {
    auto backend = std::make_shared<FlakyBackend>(2);
    Gateway gw(backend, testsupport::fast_gateway_options());
    CHECK(gw.chat_with_tools(tool_request()).size() == 1);
    CHECK(backend->attempts == 3);
  }
  SUBCASE("three failures exhaust the retries") {
    auto backend = std::make_shared<FlakyBackend>(3);
    Gateway gw(backend, testsupport::fast_gateway_options());
    CHECK_THROWS_AS(gw.chat_with_tools(tool_request()), TransportError);
    CHECK(backend->attempts == 3);
  }
  SUBCASE("retry budget is configurable") {
    auto backend = std::make_shared<FlakyBackend>(1);
    GatewayOptions options = testsupport::fast_gateway_options();
    options.max_transport_retries = 0;
    Gateway gw(backend, options);
    CHECK_THROWS_AS(gw.chat_with_tools(tool_request()), TransportError);
    CHECK(backend->attempts == 1);
  }
}

TEST_CASE("chat_with_tools requires a tool definition") {
  Gateway gw(std::make_shared<MockBackend>(), testsupport::fast_gateway_options());
  ChatRequest r;
  r.messages.push_back({"user", "hi"});
  CHECK_THROWS_AS(gw.chat_with_tools(r), ValidationError);
}

TEST_CASE("gateway counts calls for observability") {
  Gateway gw(std::make_shared<MockBackend>(), testsupport::fast_gateway_options());
  CHECK(gw.chat_call_count() == 0);
  gw.embed("x", "m");
  CHECK(gw.embed_call_count() == 1);
}

TEST_CASE("malformed endpoint URL fails as a transport error") {
  HttpBackendConfig config;
  config.base_url = "not a url";
  CHECK_THROWS_AS(HttpBackend{config}, TransportError);
}

TEST_CASE("mock maintenance responder follows the keyword rules") {
  MockBackend backend{MockOptions{64}};
  auto request = [&](const std::string& value, const std::string& sentence, bool with_append,
                     const std::string& existing_value) {
    ChatRequest r;
    r.tools.push_back(R"({"type":"function","function":{"name":"pass","parameters":{}}})");
    r.tools.push_back(R"({"type":"function","function":{"name":"update","parameters":{}}})");
    if (with_append) {
      r.tools.push_back(R"({"type":"function","function":{"name":"append","parameters":{}}})");
    }
    json context = {{"candidate", {{"value", value}, {"sentence", sentence}}},
                    {"existing", json::array({{{"id", "p1"}, {"value", existing_value}}})}};
    r.messages.push_back({"user", "Context:\n```json\n" + context.dump() + "\n```"});
    return r;
  };

  SUBCASE("equal value, positive phrasing -> pass") {
    auto calls = backend.chat(request("Jazz", "Jazz is still my thing.", true, "jazz"));
    REQUIRE(calls.size() == 1);
    CHECK(calls[0].tool_name == "pass");
    CHECK(json::parse(calls[0].arguments_document).at("existing_preference_id") == "p1");
  }
  SUBCASE("equal value, negated phrasing -> update") {
    auto calls = backend.chat(request("Jazz", "I don't like jazz anymore.", true, "Jazz"));
    REQUIRE(calls.size() == 1);
    CHECK(calls[0].tool_name == "update");
  }
  SUBCASE("different value with append available -> append") {
    auto calls = backend.chat(request("Rock", "Rock works too.", true, "Jazz"));
    REQUIRE(calls.size() == 1);
    CHECK(calls[0].tool_name == "append");
  }
  SUBCASE("different value without append -> update of the existing one") {
    auto calls = backend.chat(request("Rock", "Make it rock now.", false, "Jazz"));
    REQUIRE(calls.size() == 1);
    CHECK(calls[0].tool_name == "update");
    CHECK(json::parse(calls[0].arguments_document).at("existing_preference_id") == "p1");
  }
}

// ---------------------------------------------------------------------------
// Live wire-protocol client against a loopback server.

#include <atomic>
#include <thread>

#include "httplib.h"

namespace {

struct WireServer {
  httplib::Server server;
  std::thread thread;
  int port = 0;
  std::atomic<int> chat_requests{0};

  WireServer() {
    server.Post("/v1/chat/completions", [this](const httplib::Request& req,
                                               httplib::Response& res) {
      ++chat_requests;
      json body = json::parse(req.body);
      if (req.get_header_value("Authorization") != "Bearer good-key") {
        res.status = 401;
        return;
      }
      if (body.at("model") == "flaky-model" && chat_requests <= 2) {
        res.status = 500;
        return;
      }
      json tool_calls = json::array();
      if (body.at("model") != "silent-model") {
        tool_calls.push_back(
            {{"id", "call_1"},
             {"type", "function"},
             {"function",
              {{"name", "extract_user_preference"}, {"arguments", "{\"a\":1}"}}}});
      }
      json out = {{"choices", json::array({{{"message", {{"tool_calls", tool_calls}}}}})}};
      res.set_content(out.dump(), "application/json");
    });
    server.Post("/v1/embeddings", [](const httplib::Request& req, httplib::Response& res) {
      json body = json::parse(req.body);
      size_t dim = body.at("model") == "small-model" ? 4 : 8;
      json values = json::array();
      for (size_t i = 0; i < dim; ++i) values.push_back(0.5);
      json out = {{"data", json::array({{{"embedding", values}}})}};
      res.set_content(out.dump(), "application/json");
    });
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~WireServer() {
    server.stop();
    thread.join();
  }

  HttpBackendConfig config(const std::string& key = "good-key", size_t dim = 8) {
    HttpBackendConfig c;
    c.base_url = "http://127.0.0.1:" + std::to_string(port) + "/v1";
    c.api_key = key;
    c.embedding_dim = dim;
    return c;
  }
};

}  // namespace

TEST_CASE("http backend speaks the chat-completions wire protocol") {
  WireServer server;

  SUBCASE("tool calls are parsed with verbatim argument payloads") {
    HttpBackend backend(server.config());
    ChatRequest r = tool_request();
    r.model = "good-model";
    auto calls = backend.chat(r);
    REQUIRE(calls.size() == 1);
    CHECK(calls[0].tool_name == "extract_user_preference");
    CHECK(calls[0].arguments_document == "{\"a\":1}");
  }
  SUBCASE("missing tool call under a forced tool choice is a protocol error") {
    HttpBackend backend(server.config());
    ChatRequest r = tool_request();
    r.model = "silent-model";
    r.tool_choice = "extract_user_preference";
    CHECK_THROWS_AS(backend.chat(r), ProtocolError);
  }
  SUBCASE("bad credentials raise an auth error, not a retry") {
    auto backend = std::make_shared<HttpBackend>(server.config("bad-key"));
    Gateway gw(backend, testsupport::fast_gateway_options());
    int before = server.chat_requests;
    CHECK_THROWS_AS(gw.chat_with_tools(tool_request()), AuthError);
    CHECK(server.chat_requests == before + 1);
  }
  SUBCASE("HTTP 5xx is retried as a transport failure") {
    auto backend = std::make_shared<HttpBackend>(server.config());
    Gateway gw(backend, testsupport::fast_gateway_options());
    ChatRequest r = tool_request();
    r.model = "flaky-model";  // fails twice, then answers
    auto calls = gw.chat_with_tools(r);
    CHECK(calls.size() == 1);
    CHECK(server.chat_requests == 3);
  }
  SUBCASE("embeddings parse and enforce the configured dimension") {
    HttpBackend backend(server.config());
    EmbeddingVector v = backend.embed("hello", "big-model");
    CHECK(v.dim() == 8);
    CHECK(v.values[0] == 0.5);
    CHECK_THROWS_AS(backend.embed("hello", "small-model"), ProtocolError);
  }
  SUBCASE("connection refused surfaces as a transport error") {
    HttpBackendConfig config;
    config.base_url = "http://127.0.0.1:1";  // nothing listens here
    config.connect_timeout_s = 0.2;
    HttpBackend backend(config);
    CHECK_THROWS_AS(backend.chat(tool_request()), TransportError);
  }
}

TEST_CASE("rate limiter throttles without deadlocking") {
  RateLimiter limiter(1000.0, 2.0);
  for (int i = 0; i < 5; ++i) limiter.acquire();  // must terminate quickly
  RateLimiter unlimited(0.0, 1.0);
  for (int i = 0; i < 100; ++i) unlimited.acquire();
}
