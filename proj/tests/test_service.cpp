#include "doctest.h"

#include "httplib.h"
#include "json.hpp"
#include "prefmem/errors.hpp"
#include "prefmem/service.hpp"
#include "test_support.hpp"

using namespace prefmem;
using nlohmann::json;

namespace {

ServiceConfig test_config(const std::string& scratch_name) {
  ServiceConfig config;
  config.listen_address = "127.0.0.1:0";
  config.storage_root = testsupport::fresh_dir(scratch_name);
  config.taxonomy_file = testsupport::data_dir() / "taxonomy.json";
  config.gateway.mock = true;
  config.gateway.mock_playbook =
      (testsupport::data_dir() / "fixture" / "mock_playbook.json").string();
  return config;
}

json fixture_transcript(const std::string& point_id) {
  for (const auto& p : testsupport::fixture_corpus()) {
    if (p.id == point_id) {
      json turns = json::array();
      for (const auto& t : p.extraction_conversation.turns) {
        turns.push_back({{"speaker", t.speaker}, {"text", t.text}});
      }
      return json{{"conversation_id", p.extraction_conversation.conversation_id},
                  {"turns", turns}};
    }
  }
  FAIL("unknown fixture point ", point_id);
  return {};
}

struct RunningService {
  Service service;
  httplib::Client client;

  explicit RunningService(ServiceConfig config)
      : service(std::move(config)), client("127.0.0.1", service.start()) {}

  json post(const std::string& path, const json& body, int expected_status,
            const httplib::Headers& headers = {}) {
    auto res = client.Post(path, headers, body.dump(), "application/json");
    REQUIRE(res);
    CHECK(res->status == expected_status);
    return res->body.empty() ? json{} : json::parse(res->body);
  }
};

}  // namespace

TEST_CASE("conversation ingestion extracts and appends through the HTTP surface") {
  RunningService rs(test_config("svc_ingest"));
  json out = rs.post("/v1/users/user_7/conversations", fixture_transcript("u7-01"), 200);
  CHECK(out.at("structurally_valid") == true);
  REQUIRE(out.at("mutations").size() == 1);
  CHECK(out.at("mutations").at(0).at("action") == "append");
  CHECK(out.at("candidates").at(0).at("value") == "Italian");

  SUBCASE("re-ingesting the same conversation passes instead of duplicating") {
    json again = rs.post("/v1/users/user_7/conversations", fixture_transcript("u7-01"), 200);
    CHECK(again.at("mutations").at(0).at("action") == "pass");
    CHECK(rs.service.store().size("user_7") == 1);
  }
  SUBCASE("a preference-free transcript yields an empty mutation list") {
    json body = {{"conversation_id", "c-none"},
                 {"turns", json::array({{{"speaker", "user"},
                                         {"text", "What is the weather like tomorrow?"}}})}};
    json out2 = rs.post("/v1/users/user_7/conversations", body, 200);
    CHECK(out2.at("mutations").empty());
    CHECK(out2.at("candidates").empty());
  }
  SUBCASE("malformed bodies are a 400") {
    rs.post("/v1/users/user_7/conversations", json{{"turns", "nope"}}, 400);
    auto res = rs.client.Post("/v1/users/user_7/conversations", "{{{", "application/json");
    REQUIRE(res);
    CHECK(res->status == 400);
  }
}

TEST_CASE("retrieval endpoint ranks stored preferences") {
  RunningService rs(test_config("svc_retrieve"));
  rs.post("/v1/users/user_7/conversations", fixture_transcript("u7-02"), 200);
  rs.post("/v1/users/user_7/conversations", fixture_transcript("u7-01"), 200);

  json out = rs.post("/v1/users/user_7/retrieve",
                     json{{"utterance", "Where should I check traffic information for the drive?"},
                          {"k", 1}},
                     200);
  REQUIRE(out.at("results").size() == 1);
  CHECK(out.at("results").at(0).at("value") == "NavFlow");
  CHECK(out.at("results").at(0).at("detail") == "traffic_information_source_preferences");

  SUBCASE("unknown users get an empty 200") {
    json empty = rs.post("/v1/users/stranger/retrieve", json{{"utterance", "hello"}}, 200);
    CHECK(empty.at("results").empty());
  }
  SUBCASE("k = 0 is a 400") {
    rs.post("/v1/users/user_7/retrieve", json{{"utterance", "x"}, {"k", 0}}, 400);
  }
  SUBCASE("empty utterances are a 400") {
    rs.post("/v1/users/user_7/retrieve", json{{"utterance", "  "}}, 400);
  }
  SUBCASE("dynamic-n mode resolves k from the stored sub-category count") {
    json dynamic = rs.post("/v1/users/user_7/retrieve",
                           json{{"utterance", "any traffic news"},
                                {"dynamic_sub", "traffic_and_conditions"}},
                           200);
    CHECK(dynamic.at("results").size() == 1);
  }
}

TEST_CASE("preference listing and deletion") {
  RunningService rs(test_config("svc_delete"));
  rs.post("/v1/users/user_1/conversations", fixture_transcript("u1-01"), 200);
  rs.post("/v1/users/user_1/conversations", fixture_transcript("u1-02"), 200);
  rs.post("/v1/users/user_1/conversations", fixture_transcript("u1-03"), 200);

  auto res = rs.client.Get("/v1/users/user_1/preferences");
  REQUIRE(res);
  CHECK(res->status == 200);
  json listed = json::parse(res->body);
  REQUIRE(listed.at("preferences").size() == 3);

  const std::string pid = listed.at("preferences").at(0).at("id");
  auto del = rs.client.Delete("/v1/users/user_1/preferences/" + pid);
  REQUIRE(del);
  CHECK(del->status == 200);
  auto del_again = rs.client.Delete("/v1/users/user_1/preferences/" + pid);
  REQUIRE(del_again);
  CHECK(del_again->status == 404);
  CHECK(rs.service.store().size("user_1") == 2);
}

TEST_CASE("opt-out purges stored preferences and blocks future extraction") {
  RunningService rs(test_config("svc_optout"));
  rs.post("/v1/users/user_7/conversations", fixture_transcript("u7-01"), 200);
  REQUIRE(rs.service.store().size("user_7") == 1);

  json out = rs.post("/v1/users/user_7/optout", json{{"subs", json::array({"restaurant"})}}, 200);
  CHECK(out.at("purged") == 1);
  CHECK(rs.service.store().size("user_7") == 0);

  // The same conversation now extracts nothing for this user.
  json after = rs.post("/v1/users/user_7/conversations", fixture_transcript("u7-01"), 200);
  CHECK(after.at("candidates").empty());
  CHECK(rs.service.store().size("user_7") == 0);

  SUBCASE("other users are unaffected") {
    json other = rs.post("/v1/users/user_99/conversations", fixture_transcript("u7-01"), 200);
    CHECK(other.at("candidates").size() == 1);
  }
  SUBCASE("unknown sub-categories are a 400") {
    rs.post("/v1/users/user_7/optout", json{{"subs", json::array({"movies"})}}, 400);
  }
}

TEST_CASE("idempotency keys replay the original response for 24h") {
  RunningService rs(test_config("svc_idem"));
  httplib::Headers key{{"Idempotency-Key", "req-123"}};
  json first = rs.post("/v1/users/user_2/conversations", fixture_transcript("u2-01"), 200, key);
  json second = rs.post("/v1/users/user_2/conversations", fixture_transcript("u2-01"), 200, key);
  CHECK(first == second);
  CHECK(first.at("mutations").at(0).at("action") == "append");  // replayed, not re-decided
  CHECK(rs.service.store().size("user_2") == 1);
}

TEST_CASE("bearer-token auth guards every route when configured") {
  ServiceConfig config = test_config("svc_auth");
  config.bearer_token = "secret-token";
  RunningService rs(std::move(config));

  auto denied = rs.client.Get("/v1/users/user_1/preferences");
  REQUIRE(denied);
  CHECK(denied->status == 401);

  httplib::Headers auth{{"Authorization", "Bearer secret-token"}};
  auto res = rs.client.Get("/v1/users/user_1/preferences", auth);
  REQUIRE(res);
  CHECK(res->status == 200);
}

TEST_CASE("mock mode never constructs a network backend") {
  ServiceConfig config = test_config("svc_nonet");
  bool live_constructed = false;
  Service service(config, [&live_constructed](const GatewayConfig&) -> std::shared_ptr<ChatBackend> {
    live_constructed = true;
    throw TransportError("live backend must not be built in mock mode");
  });
  json out = service.ingest_conversation("user_7", fixture_transcript("u7-01"));
  CHECK(out.at("mutations").size() == 1);
  CHECK_FALSE(live_constructed);
  CHECK(service.gateway().backend().name() == "mock");
}

TEST_CASE("config validation rejects broken setups") {
  ServiceConfig config = test_config("svc_badcfg");
  SUBCASE("bad listen address") {
    config.listen_address = "nonsense";
    CHECK_THROWS_AS(config.validate(), ValidationError);
  }
  SUBCASE("live mode without credentials") {
    config.gateway.mock = false;
    config.gateway.api_key.clear();
    CHECK_THROWS_AS(config.validate(), ValidationError);
  }
  SUBCASE("non-positive retrieval k") {
    config.retrieval_k = 0;
    CHECK_THROWS_AS(config.validate(), ValidationError);
  }
}

namespace {

class DownBackend : public ChatBackend {
 public:
  std::vector<ToolCall> chat(const ChatRequest&) override {
    throw TransportError("endpoint unreachable");
  }
  EmbeddingVector embed(const std::string&, const std::string&) override {
    throw TransportError("endpoint unreachable");
  }
  std::string name() const override { return "down"; }
};

}  // namespace

TEST_CASE("upstream model failures surface as 502") {
  ServiceConfig config = test_config("svc_down");
  config.gateway.max_transport_retries = 0;
  Service service(std::move(config), std::make_shared<DownBackend>());
  httplib::Client client("127.0.0.1", service.start());

  auto ingest = client.Post("/v1/users/u/conversations",
                            fixture_transcript("u7-01").dump(), "application/json");
  REQUIRE(ingest);
  CHECK(ingest->status == 502);

  auto retrieve = client.Post("/v1/users/u/retrieve", R"({"utterance":"x"})",
                              "application/json");
  REQUIRE(retrieve);
  CHECK(retrieve->status == 200);  // empty store never reaches the embedder

  service.store().insert(
      "u",
      CandidatePreference{{"entertainment_and_media", "music", "favorite_genres"}, "Jazz",
                          "Jazz.", "c1"},
      EmbeddingVector{std::vector<double>(256, 1.0), "mock-embed"});
  auto retrieve2 = client.Post("/v1/users/u/retrieve", R"({"utterance":"x"})",
                               "application/json");
  REQUIRE(retrieve2);
  CHECK(retrieve2->status == 502);
  service.stop();
}
