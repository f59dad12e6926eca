#include "prefmem/maintenance.hpp"

#include "json.hpp"
#include "prefmem/errors.hpp"
#include "prefmem/retrieval.hpp"
#include "prefmem/util.hpp"

namespace prefmem::maintenance {

using nlohmann::json;

std::string to_string(Action action) {
  switch (action) {
    case Action::pass:
      return "pass";
    case Action::update:
      return "update";
    case Action::append:
      return "append";
  }
  return "?";
}

namespace {

std::string tool_with_reference(const char* name, const char* description) {
  json def = {
      {"type", "function"},
      {"function",
       {{"name", name},
        {"description", description},
        {"parameters",
         {{"type", "object"},
          {"properties",
           {{"existing_preference_id",
             {{"type", "string"},
              {"description", "Identifier of the existing preference causing this call."}}}}},
          {"required", json::array({"existing_preference_id"})}}}}}};
  return def.dump();
}

std::string tool_without_parameters(const char* name, const char* description) {
  json def = {{"type", "function"},
              {"function",
               {{"name", name},
                {"description", description},
                {"parameters", {{"type", "object"}, {"properties", json::object()}}}}}};
  return def.dump();
}

}  // namespace

Toolset build_toolset(DetailType type, bool has_existing) {
  Toolset t;
  t.append_enabled = type == DetailType::MP || !has_existing;
  t.names = {"pass", "update"};
  t.tools.push_back(tool_with_reference(
      "pass", "The incoming preference already exists in the storage and is not inserted again."));
  t.tools.push_back(tool_with_reference(
      "update",
      "The incoming preference updates an existing preference. The new preference is inserted "
      "and the referenced existing preference is deleted."));
  if (t.append_enabled) {
    t.names.push_back("append");
    t.tools.push_back(tool_without_parameters(
        "append", "The incoming preference is new and not present in the storage."));
  }
  return t;
}

namespace {

Decision fallback_decision(DetailType type, const std::vector<Preference>& existing) {
  Decision d;
  d.protocol_violation = true;
  if (type == DetailType::SP && !existing.empty()) {
    d.action = Action::update;
    d.existing_id = existing.front().id;
  } else {
    d.action = Action::append;
  }
  return d;
}

bool known_existing(const std::vector<Preference>& existing, const std::string& id) {
  for (const auto& p : existing) {
    if (p.id == id) return true;
  }
  return false;
}

}  // namespace

Decision decide(Gateway& gateway, const CandidatePreference& candidate,
                const std::vector<Preference>& existing_in_detail,
                const CategoryTaxonomy& taxonomy, const Options& options) {
  const DetailCategory* detail = taxonomy.find_detail(candidate.path);
  if (!detail) {
    throw ValidationError("maintenance candidate path not in taxonomy: " + candidate.path.str());
  }
  for (const auto& p : existing_in_detail) {
    if (p.path != candidate.path) {
      throw ValidationError("maintenance context mixes detail categories: " + p.path.str() +
                            " vs " + candidate.path.str());
    }
  }

  if (existing_in_detail.empty() && options.forced_append_on_empty) {
    Decision d;
    d.action = Action::append;
    d.forced = true;
    return d;
  }

  Toolset toolset = build_toolset(detail->type, !existing_in_detail.empty());

  json existing = json::array();
  for (const auto& p : existing_in_detail) {
    existing.push_back({{"id", p.id}, {"value", p.value}, {"sentence", p.source_sentence}});
  }
  json context = {{"candidate",
                   {{"detail", candidate.path.detail},
                    {"detail_display", detail->display_name},
                    {"detail_type", to_string(detail->type)},
                    {"value", candidate.value},
                    {"sentence", candidate.source_sentence}}},
                  {"existing", existing}};

  ChatRequest request;
  request.model = options.chat_model;
  request.temperature = 0.0;
  request.tools = toolset.tools;
  request.messages.push_back(
      {"system",
       "You maintain a user's stored preferences. A new candidate preference was extracted. "
       "Compare it to the existing preferences in the same detail category and call exactly one "
       "maintenance function: pass if the candidate is already present, update if it replaces a "
       "specific existing preference (also when the user revoked it), append if it is genuinely "
       "new."});
  request.messages.push_back({"user", "Context:\n```json\n" + context.dump() + "\n```"});

  std::vector<ToolCall> calls = gateway.chat_with_tools(request);
  if (calls.empty()) return fallback_decision(detail->type, existing_in_detail);
  const ToolCall& call = calls.front();

  Decision d;
  if (call.tool_name == "pass") {
    d.action = Action::pass;
  } else if (call.tool_name == "update") {
    d.action = Action::update;
  } else if (call.tool_name == "append") {
    d.action = Action::append;
  } else {
    return fallback_decision(detail->type, existing_in_detail);
  }
  if (d.action == Action::append && !toolset.append_enabled) {
    return fallback_decision(detail->type, existing_in_detail);
  }
  if (d.action != Action::append) {
    json args;
    try {
      args = json::parse(call.arguments_document);
    } catch (const json::parse_error&) {
      return fallback_decision(detail->type, existing_in_detail);
    }
    std::string id = args.value("existing_preference_id", "");
    if (id.empty() || !known_existing(existing_in_detail, id)) {
      return fallback_decision(detail->type, existing_in_detail);
    }
    d.existing_id = id;
    d.rationale_text = args.value("rationale", "");
  }
  return d;
}

MutationRecord apply(const Decision& decision, const std::string& user_id,
                     const CandidatePreference& candidate, PreferenceStore& store,
                     Gateway& gateway, const CategoryTaxonomy& taxonomy, const Options& options) {
  MutationRecord record;
  record.decision = decision;
  record.path = candidate.path;
  record.candidate_value = candidate.value;

  if (decision.action == Action::pass) {
    if (!decision.existing_id || !store.get(user_id, *decision.existing_id)) {
      throw ConflictError("pass references a preference that no longer exists");
    }
    return record;
  }

  if (decision.action == Action::update) {
    if (!decision.existing_id || !store.get(user_id, *decision.existing_id)) {
      throw ConflictError("update references a preference that no longer exists");
    }
  }

  const DetailCategory* detail = taxonomy.find_detail(candidate.path);
  if (!detail) {
    throw ValidationError("apply with path not in taxonomy: " + candidate.path.str());
  }
  EmbeddingVector embedding = gateway.embed(
      enriched_text(detail->display_name, candidate.value, candidate.source_sentence),
      options.embedding_model);

  if (decision.action == Action::update) {
    if (!store.erase(user_id, *decision.existing_id)) {
      throw ConflictError("update target vanished during application");
    }
    record.deleted_ids.push_back(*decision.existing_id);
  }
  Preference inserted = store.insert(user_id, candidate, embedding);
  record.inserted_ids.push_back(inserted.id);
  return record;
}

std::vector<MutationRecord> ingest(const std::string& user_id,
                                   const std::vector<CandidatePreference>& candidates,
                                   PreferenceStore& store, Gateway& gateway,
                                   const CategoryTaxonomy& taxonomy, const Options& options) {
  std::vector<MutationRecord> records;
  for (const auto& candidate : candidates) {
    bool retried = false;
    for (;;) {
      try {
        std::vector<Preference> context = store.by_detail_category(user_id, candidate.path);
        Decision decision = decide(gateway, candidate, context, taxonomy, options);
        records.push_back(apply(decision, user_id, candidate, store, gateway, taxonomy, options));
        break;
      } catch (const ConflictError&) {
        if (retried) {
          MutationRecord failed;
          failed.path = candidate.path;
          failed.candidate_value = candidate.value;
          failed.error = "conflict persisted after retry";
          records.push_back(std::move(failed));
          break;
        }
        retried = true;  // re-read the context and decide again
      } catch (const Error& e) {
        MutationRecord failed;
        failed.path = candidate.path;
        failed.candidate_value = candidate.value;
        failed.error = e.what();
        records.push_back(std::move(failed));
        break;
      }
    }
  }
  return records;
}

}  // namespace prefmem::maintenance
