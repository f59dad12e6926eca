#pragma once

#include <optional>
#include <string>
#include <vector>

#include "prefmem/gateway.hpp"
#include "prefmem/schema.hpp"
#include "prefmem/taxonomy.hpp"

namespace prefmem {

struct Turn {
  std::string speaker;  // "user" | "assistant"
  std::string text;
};

struct ConversationTranscript {
  std::string conversation_id;
  std::vector<Turn> turns;
};

// Throws ValidationError when empty, a turn has empty text, or a speaker is
// neither "user" nor "assistant".
void validate_transcript(const ConversationTranscript& transcript);

// An extraction result before maintenance.
struct CandidatePreference {
  CategoryPath path;
  std::string value;
  std::string source_sentence;
  std::string conversation_id;
};

struct ExtractionOutcome {
  std::vector<CandidatePreference> candidates;
  bool structurally_valid = true;
  int discarded_sentinel_count = 0;
  std::string raw_document;  // tool-call payload, verbatim

  // Deviations that were repaired rather than rejected.
  int sp_overflow_count = 0;        // SP leaf carried several records; first kept
  int sentence_fallback_count = 0;  // reveal sentence missing; last user turn used
  int dropped_empty_value_count = 0;
};

struct ExtractOptions {
  std::string chat_model = "mock-chat";
};

// Runs the extraction tool call over the transcript and validates the
// returned document against the compiled schema. Sentinel entries are
// counted then discarded. A payload naming parameters or hierarchy absent
// from the schema is structurally invalid and yields zero candidates, so
// opted-out categories can never leak through regardless of model behavior.
ExtractionOutcome extract(Gateway& gateway, const ConversationTranscript& transcript,
                          const CompiledSchema& schema, const ExtractOptions& options = {});

// Validates an already-obtained payload against the schema; extract() routes
// through this, and tests can drive it with synthetic payloads.
ExtractionOutcome validate_extraction_payload(const std::string& arguments_document,
                                              const CompiledSchema& schema,
                                              const ConversationTranscript& transcript);

enum class CountBucket { no_extraction, one_preference, multi_preference };
enum class EvalMode { in_schema, out_of_schema };

struct OutcomeClass {
  CountBucket bucket = CountBucket::no_extraction;
  bool correct = false;
  bool over_extraction = false;
};

std::string to_string(CountBucket bucket);

// In-Schema: correct iff some candidate's 3-level path equals the ground
// truth. Out-of-Schema: correct iff no candidate matches the excluded ground
// truth; anything extracted alongside a correct outcome is flagged as
// over-extraction (spillover).
OutcomeClass classify_outcome(const ExtractionOutcome& outcome,
                              const std::optional<CandidatePreference>& ground_truth,
                              EvalMode mode);

}  // namespace prefmem
