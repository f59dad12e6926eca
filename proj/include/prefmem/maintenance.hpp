#pragma once

#include <optional>
#include <string>
#include <vector>

#include "prefmem/extraction.hpp"
#include "prefmem/gateway.hpp"
#include "prefmem/prefstore.hpp"
#include "prefmem/taxonomy.hpp"

namespace prefmem::maintenance {

enum class Action { pass, update, append };

std::string to_string(Action action);

struct Decision {
  Action action = Action::append;
  std::optional<std::string> existing_id;  // required for pass and update
  std::string rationale_text;
  bool forced = false;              // append shortcut: empty context, no model call
  bool protocol_violation = false;  // model picked a disabled tool; fallback applied
};

// Tools presented to the model. `append` requires no parameters; `pass` and
// `update` require the existing preference reference. `append` is present
// iff the category allows multiple preferences or nothing is stored yet.
struct Toolset {
  bool append_enabled = true;
  std::vector<std::string> names;
  std::vector<std::string> tools;  // serialized definitions
};

Toolset build_toolset(DetailType type, bool has_existing);

struct Options {
  bool forced_append_on_empty = true;
  std::string chat_model = "mock-chat";
  std::string embedding_model = "mock-embed";
};

// One decision for the candidate against the same-detail-category context.
// Pre: every preference in existing_in_detail shares the candidate's detail
// category. With an empty context the decision is append without a model
// call (configurable).
Decision decide(Gateway& gateway, const CandidatePreference& candidate,
                const std::vector<Preference>& existing_in_detail,
                const CategoryTaxonomy& taxonomy, const Options& options = {});

struct MutationRecord {
  std::vector<std::string> inserted_ids;
  std::vector<std::string> deleted_ids;
  Decision decision;
  CategoryPath path;
  std::string candidate_value;
  std::string error;  // set when this candidate failed; batch continues
};

// Applies the decision: pass leaves the store unchanged, update removes the
// referenced preference and inserts the candidate, append inserts. Embeds
// the candidate's enriched text for storage. Throws ConflictError when the
// referenced preference vanished.
MutationRecord apply(const Decision& decision, const std::string& user_id,
                     const CandidatePreference& candidate, PreferenceStore& store,
                     Gateway& gateway, const CategoryTaxonomy& taxonomy,
                     const Options& options = {});

// Processes candidates in order, each seeing the store state left by its
// predecessors. Per-candidate errors are recorded, not fatal; a conflict
// triggers one decide retry.
std::vector<MutationRecord> ingest(const std::string& user_id,
                                   const std::vector<CandidatePreference>& candidates,
                                   PreferenceStore& store, Gateway& gateway,
                                   const CategoryTaxonomy& taxonomy, const Options& options = {});

}  // namespace prefmem::maintenance
