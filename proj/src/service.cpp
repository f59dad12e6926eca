#include "prefmem/service.hpp"

#include <iostream>
#include <map>
#include <mutex>
#include <thread>

#include "httplib.h"
#include "prefmem/errors.hpp"
#include "prefmem/extraction.hpp"
#include "prefmem/maintenance.hpp"
#include "prefmem/retrieval.hpp"
#include "prefmem/schema.hpp"
#include "prefmem/util.hpp"

namespace prefmem {

using nlohmann::json;

ConversationTranscript transcript_from_json(const json& body) {
  if (!body.is_object() || !body.contains("turns") || !body.at("turns").is_array()) {
    throw ParseError("transcript body must be an object with a \"turns\" array");
  }
  ConversationTranscript t;
  t.conversation_id = body.value("conversation_id", "");
  for (const auto& jt : body.at("turns")) {
    if (!jt.is_object()) throw ParseError("every turn must be an object");
    t.turns.push_back(Turn{jt.value("speaker", ""), jt.value("text", "")});
  }
  validate_transcript(t);
  return t;
}

struct Service::Impl {
  ServiceConfig config;
  CategoryTaxonomy taxonomy;
  std::unique_ptr<Gateway> gateway;
  PreferenceStore store;
  httplib::Server server;
  std::thread server_thread;
  int port = 0;
  std::mutex ingest_mutex_guard;
  std::map<std::string, std::shared_ptr<std::mutex>> ingest_mutexes;  // writer per user

  Impl(ServiceConfig cfg, std::unique_ptr<Gateway> gw)
      : config(std::move(cfg)),
        taxonomy(load_taxonomy_file(config.taxonomy_file)),
        gateway(std::move(gw)),
        store(config.storage_root, taxonomy,
              StoreOptions{config.gateway.embedding_dim, nullptr, 24.0}) {}

  std::shared_ptr<std::mutex> user_mutex(const std::string& user_id) {
    std::lock_guard<std::mutex> lock(ingest_mutex_guard);
    auto& slot = ingest_mutexes[user_id];
    if (!slot) slot = std::make_shared<std::mutex>();
    return slot;
  }

};

namespace {

json error_body(const std::string& message) { return json{{"error", message}}; }

}  // namespace

Service::Service(ServiceConfig config, const LiveBackendFactory& live_factory) {
  config.validate();  // config errors surface before any backend exists
  std::unique_ptr<Gateway> gateway = make_gateway(config.gateway, live_factory);
  impl_ = std::make_unique<Impl>(std::move(config), std::move(gateway));
}

Service::Service(ServiceConfig config, std::shared_ptr<ChatBackend> backend) {
  config.validate();
  auto gateway = std::make_unique<Gateway>(
      std::move(backend),
      GatewayOptions{config.gateway.max_transport_retries, config.gateway.backoff_initial_ms,
                     config.gateway.rate_per_second, 4.0, true});
  impl_ = std::make_unique<Impl>(std::move(config), std::move(gateway));
}

Service::~Service() { stop(); }

const CategoryTaxonomy& Service::taxonomy() const { return impl_->taxonomy; }
PreferenceStore& Service::store() { return impl_->store; }
Gateway& Service::gateway() { return *impl_->gateway; }
const ServiceConfig& Service::config() const { return impl_->config; }

json Service::ingest_conversation(const std::string& user_id, const json& body,
                                  const std::string& idempotency_key) {
  ConversationTranscript transcript = transcript_from_json(body);

  auto mutex = impl_->user_mutex(user_id);
  std::lock_guard<std::mutex> lock(*mutex);

  if (!idempotency_key.empty()) {
    if (auto replay = impl_->store.idempotent_response(user_id, idempotency_key)) {
      return *replay;
    }
  }

  // Per-user schema: compiled without opted-out sub-trees.
  std::vector<std::string> exclusions;
  for (const auto& sub : impl_->store.opt_outs(user_id)) {
    if (impl_->taxonomy.find_sub(sub)) exclusions.push_back(sub);
  }
  CategoryTaxonomy effective = opt_out(impl_->taxonomy, exclusions);
  CompiledSchema schema = compile_schema(effective);

  ExtractOptions extract_opts{impl_->config.gateway.chat_model};
  ExtractionOutcome outcome = extract(*impl_->gateway, transcript, schema, extract_opts);

  // Schema exclusion already makes these impossible; validation re-checks so
  // the opt-out guarantee does not rest on model behavior.
  std::erase_if(outcome.candidates, [&](const CandidatePreference& c) {
    return !validate_path(effective, c.path);
  });

  maintenance::Options maint_opts;
  maint_opts.chat_model = impl_->config.gateway.chat_model;
  maint_opts.embedding_model = impl_->config.gateway.embedding_model;
  std::vector<maintenance::MutationRecord> records = maintenance::ingest(
      user_id, outcome.candidates, impl_->store, *impl_->gateway, impl_->taxonomy, maint_opts);

  json candidates = json::array();
  for (const auto& c : outcome.candidates) {
    candidates.push_back({{"main", c.path.main},
                          {"sub", c.path.sub},
                          {"detail", c.path.detail},
                          {"value", c.value},
                          {"sentence", c.source_sentence}});
  }
  json mutations = json::array();
  for (const auto& r : records) {
    json m = {{"action", r.error.empty() ? maintenance::to_string(r.decision.action) : "error"},
              {"detail", r.path.detail},
              {"value", r.candidate_value},
              {"inserted_ids", r.inserted_ids},
              {"deleted_ids", r.deleted_ids}};
    if (!r.error.empty()) m["error"] = r.error;
    if (r.decision.existing_id) m["existing_id"] = *r.decision.existing_id;
    if (r.decision.forced) m["forced"] = true;
    if (r.decision.protocol_violation) m["protocol_violation"] = true;
    mutations.push_back(std::move(m));
  }
  json response = {{"conversation_id", transcript.conversation_id},
                   {"structurally_valid", outcome.structurally_valid},
                   {"discarded_sentinel_count", outcome.discarded_sentinel_count},
                   {"candidates", candidates},
                   {"mutations", mutations}};
  if (!idempotency_key.empty()) {
    impl_->store.remember_idempotent(user_id, idempotency_key, response);
  }
  return response;
}

json Service::retrieve_preferences(const std::string& user_id, const json& body) {
  if (!body.is_object()) throw ParseError("retrieve body must be an object");
  RetrievalQuery query;
  query.user_id = user_id;
  query.utterance = body.value("utterance", "");
  if (util::trim(query.utterance).empty()) {
    throw ValidationError("\"utterance\" must be non-empty");
  }
  if (body.contains("dynamic_sub")) {
    query.dynamic_sub = body.at("dynamic_sub").get<std::string>();
    if (!impl_->taxonomy.find_sub(*query.dynamic_sub)) {
      throw ValidationError("unknown sub category \"" + *query.dynamic_sub + "\"");
    }
  } else {
    query.k = body.value("k", impl_->config.retrieval_k);
    if (query.k <= 0) throw ValidationError("\"k\" must be positive");
  }

  RetrievalOptions options;
  options.embedding_model = impl_->config.gateway.embedding_model;
  options.score_floor = impl_->config.score_floor;
  options.apply_floor = impl_->config.score_floor > -1.0;

  StoreSnapshot snapshot = impl_->store.snapshot(user_id);
  json results = json::array();
  for (const auto& r : retrieve(*impl_->gateway, query, snapshot, options)) {
    results.push_back({{"id", r.preference.id},
                       {"main", r.preference.path.main},
                       {"sub", r.preference.path.sub},
                       {"detail", r.preference.path.detail},
                       {"value", r.preference.value},
                       {"sentence", r.preference.source_sentence},
                       {"score", r.score}});
  }
  return json{{"user_id", user_id}, {"results", results}};
}

json Service::list_preferences(const std::string& user_id) {
  return impl_->store.export_user(user_id);
}

bool Service::delete_preference(const std::string& user_id, const std::string& preference_id) {
  return impl_->store.erase(user_id, preference_id);
}

json Service::opt_out_user(const std::string& user_id, const std::vector<std::string>& subs) {
  for (const auto& sub : subs) {
    if (!impl_->taxonomy.find_sub(sub)) {
      throw ValidationError("unknown sub category \"" + sub + "\"");
    }
  }
  size_t purged = impl_->store.add_opt_outs(user_id, subs);
  auto opt_outs = impl_->store.opt_outs(user_id);
  return json{{"user_id", user_id},
              {"purged", purged},
              {"opt_outs", std::vector<std::string>(opt_outs.begin(), opt_outs.end())}};
}

namespace {

// Maps domain errors onto status codes; handlers only throw.
template <typename Fn>
void handle(const std::string& bearer_token, const httplib::Request& req, httplib::Response& res,
            Fn&& fn) {
  const bool authorized =
      bearer_token.empty() || req.get_header_value("Authorization") == "Bearer " + bearer_token;
  if (!authorized) {
    res.status = 401;
    res.set_content(error_body("missing or invalid bearer token").dump(), "application/json");
    return;
  }
  try {
    fn();
  } catch (const ParseError& e) {
    res.status = 400;
    res.set_content(error_body(e.what()).dump(), "application/json");
  } catch (const ValidationError& e) {
    res.status = 400;
    res.set_content(error_body(e.what()).dump(), "application/json");
  } catch (const ConflictError& e) {
    res.status = 409;
    res.set_content(error_body(e.what()).dump(), "application/json");
  } catch (const TransportError& e) {
    res.status = 502;
    res.set_content(error_body(e.what()).dump(), "application/json");
  } catch (const AuthError& e) {
    res.status = 502;
    res.set_content(error_body(e.what()).dump(), "application/json");
  } catch (const Error& e) {
    res.status = 500;
    res.set_content(error_body(e.what()).dump(), "application/json");
  }
}

json parse_body(const httplib::Request& req) {
  try {
    return json::parse(req.body.empty() ? "{}" : req.body);
  } catch (const json::parse_error& e) {
    throw ParseError("request body is not valid JSON: " + std::string(e.what()));
  }
}

}  // namespace

int Service::start() {
  auto& impl = *impl_;

  // One structured log line per request; bodies are never logged here.
  impl.server.set_logger([](const httplib::Request& req, const httplib::Response& res) {
    std::cerr << json{{"ts", util::utc_now_iso8601()},
                      {"method", req.method},
                      {"path", req.path},
                      {"status", res.status}}
                     .dump()
              << "\n";
  });

  impl.server.Post(R"(/v1/users/([A-Za-z0-9_.-]+)/conversations)",
                   [this](const httplib::Request& req, httplib::Response& res) {
                     handle(impl_->config.bearer_token, req, res, [&] {
                       json out = ingest_conversation(req.matches[1], parse_body(req),
                                                      req.get_header_value("Idempotency-Key"));
                       res.set_content(out.dump(), "application/json");
                     });
                   });

  impl.server.Post(R"(/v1/users/([A-Za-z0-9_.-]+)/retrieve)",
                   [this](const httplib::Request& req, httplib::Response& res) {
                     handle(impl_->config.bearer_token, req, res, [&] {
                       json out = retrieve_preferences(req.matches[1], parse_body(req));
                       res.set_content(out.dump(), "application/json");
                     });
                   });

  impl.server.Get(R"(/v1/users/([A-Za-z0-9_.-]+)/preferences)",
                  [this](const httplib::Request& req, httplib::Response& res) {
                    handle(impl_->config.bearer_token, req, res, [&] {
                      res.set_content(list_preferences(req.matches[1]).dump(),
                                      "application/json");
                    });
                  });

  impl.server.Delete(R"(/v1/users/([A-Za-z0-9_.-]+)/preferences/([A-Za-z0-9_.-]+))",
                     [this](const httplib::Request& req, httplib::Response& res) {
                       handle(impl_->config.bearer_token, req, res, [&] {
                         if (delete_preference(req.matches[1], req.matches[2])) {
                           res.set_content(json{{"deleted", true}}.dump(), "application/json");
                         } else {
                           res.status = 404;
                           res.set_content(error_body("unknown preference").dump(),
                                           "application/json");
                         }
                       });
                     });

  impl.server.Post(R"(/v1/users/([A-Za-z0-9_.-]+)/optout)",
                   [this](const httplib::Request& req, httplib::Response& res) {
                     handle(impl_->config.bearer_token, req, res, [&] {
                       json body = parse_body(req);
                       if (!body.contains("subs") || !body.at("subs").is_array()) {
                         throw ParseError("optout body must carry a \"subs\" array");
                       }
                       auto subs = body.at("subs").get<std::vector<std::string>>();
                       res.set_content(opt_out_user(req.matches[1], subs).dump(),
                                       "application/json");
                     });
                   });

  const std::string address = impl.config.listen_address;
  const size_t colon = address.rfind(':');
  const std::string host = address.substr(0, colon);
  const int requested_port = std::stoi(address.substr(colon + 1));

  if (requested_port == 0) {
    impl.port = impl.server.bind_to_any_port(host);
  } else {
    if (!impl.server.bind_to_port(host, requested_port)) {
      throw TransportError("cannot bind " + address);
    }
    impl.port = requested_port;
  }
  impl.server_thread = std::thread([&impl] { impl.server.listen_after_bind(); });
  impl.server.wait_until_ready();
  return impl.port;
}

void Service::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->server_thread.joinable()) impl_->server_thread.join();
}

}  // namespace prefmem
