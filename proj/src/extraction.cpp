#include "prefmem/extraction.hpp"

#include "json.hpp"
#include "prefmem/errors.hpp"
#include "prefmem/util.hpp"

namespace prefmem {

using nlohmann::json;
// Payloads are walked in document order so candidates keep the order the
// model extracted them in, which is conversation order.
using ojson = nlohmann::ordered_json;

void validate_transcript(const ConversationTranscript& transcript) {
  if (transcript.turns.empty()) {
    throw ValidationError("transcript \"" + transcript.conversation_id + "\" has no turns");
  }
  for (const auto& t : transcript.turns) {
    if (t.speaker != "user" && t.speaker != "assistant") {
      throw ValidationError("transcript \"" + transcript.conversation_id +
                            "\" has unknown speaker \"" + t.speaker + "\"");
    }
    if (util::trim(t.text).empty()) {
      throw ValidationError("transcript \"" + transcript.conversation_id + "\" has an empty turn");
    }
  }
}

namespace {

std::string render_transcript(const ConversationTranscript& transcript) {
  std::string out;
  for (const auto& t : transcript.turns) {
    out += t.speaker;
    out += ": ";
    out += t.text;
    out += "\n";
  }
  return out;
}

std::string last_user_turn(const ConversationTranscript& transcript) {
  for (auto it = transcript.turns.rbegin(); it != transcript.turns.rend(); ++it) {
    if (it->speaker == "user") return it->text;
  }
  return transcript.turns.back().text;
}

int count_records(const ojson& node) {
  if (node.is_array()) {
    int n = 0;
    for (const auto& item : node) {
      if (!item.is_null()) ++n;
    }
    return n;
  }
  if (node.is_object()) return node.empty() ? 0 : 1;
  if (node.is_string()) return node.get<std::string>().empty() ? 0 : 1;
  return node.is_null() ? 0 : 1;
}

struct Walker {
  const CompiledSchema& schema;
  const ConversationTranscript& transcript;
  ExtractionOutcome& out;

  bool fail() {
    out.structurally_valid = false;
    out.candidates.clear();
    return false;
  }

  bool record_candidate(const CompiledSchema::Leaf& leaf, const ojson& record) {
    if (record.is_null()) return true;
    if (!record.is_object()) return fail();
    std::string value = util::collapse_whitespace(record.value(kFieldValue, ""));
    if (value.empty()) {
      ++out.dropped_empty_value_count;
      return true;
    }
    std::string sentence = util::trim(record.value(kFieldSourceSentence, ""));
    if (sentence.empty()) {
      sentence = last_user_turn(transcript);
      ++out.sentence_fallback_count;
    }
    out.candidates.push_back(
        CandidatePreference{leaf.path, value, sentence, transcript.conversation_id});
    return true;
  }

  bool walk_leaf(const CompiledSchema::Leaf& leaf, const ojson& node) {
    if (node.is_null()) return true;
    if (node.is_array()) {
      if (leaf.type == DetailType::SP) {
        // Single-preference leaf answered with a list: keep the first.
        if (count_records(node) > 1) ++out.sp_overflow_count;
        for (const auto& r : node) {
          if (r.is_null()) continue;
          return record_candidate(leaf, r);
        }
        return true;
      }
      for (const auto& r : node) {
        if (!record_candidate(leaf, r)) return false;
      }
      return true;
    }
    if (node.is_object()) return record_candidate(leaf, node);
    return fail();
  }

  bool walk(const ojson& root) {
    if (!root.is_object()) return fail();
    for (const auto& [main_id, main_node] : root.items()) {
      auto mit = schema.mirror.find(main_id);
      if (mit == schema.mirror.end()) return fail();
      if (main_node.is_null()) continue;
      if (!main_node.is_object()) return fail();
      for (const auto& [sub_id, sub_node] : main_node.items()) {
        if (sub_id == kSentinelParameter) {
          out.discarded_sentinel_count += count_records(sub_node);
          continue;
        }
        auto sit = mit->second.find(sub_id);
        if (sit == mit->second.end()) return fail();
        if (sub_node.is_null()) continue;
        if (!sub_node.is_object()) return fail();
        for (const auto& [detail_id, leaf_node] : sub_node.items()) {
          if (detail_id == kSentinelParameter) {
            out.discarded_sentinel_count += count_records(leaf_node);
            continue;
          }
          auto dit = sit->second.find(detail_id);
          if (dit == sit->second.end()) return fail();
          if (!walk_leaf(dit->second, leaf_node)) return false;
        }
      }
    }
    return true;
  }
};

}  // namespace

ExtractionOutcome validate_extraction_payload(const std::string& arguments_document,
                                              const CompiledSchema& schema,
                                              const ConversationTranscript& transcript) {
  ExtractionOutcome out;
  out.raw_document = arguments_document;
  ojson doc;
  try {
    doc = ojson::parse(arguments_document);
  } catch (const ojson::parse_error&) {
    out.structurally_valid = false;
    return out;
  }
  Walker{schema, transcript, out}.walk(doc);
  return out;
}

ExtractionOutcome extract(Gateway& gateway, const ConversationTranscript& transcript,
                          const CompiledSchema& schema, const ExtractOptions& options) {
  validate_transcript(transcript);

  ChatRequest request;
  request.model = options.chat_model;
  request.temperature = 0.0;
  request.tool_choice = schema.function_name;
  request.tools.push_back(schema.serialize_tool());
  request.messages.push_back(
      {"system",
       "You extract personal preferences the user reveals in the conversation below. "
       "Call the " + schema.function_name +
           " function. Fill in only categories the user clearly stated a preference for, "
           "and copy the exact user sentence that revealed each preference."});
  request.messages.push_back({"user", render_transcript(transcript)});

  std::vector<ToolCall> calls = gateway.chat_with_tools(request);
  for (const auto& call : calls) {
    if (call.tool_name == schema.function_name) {
      return validate_extraction_payload(call.arguments_document, schema, transcript);
    }
  }
  throw ProtocolError("no extraction tool call in response for conversation \"" +
                      transcript.conversation_id + "\"");
}

std::string to_string(CountBucket bucket) {
  switch (bucket) {
    case CountBucket::no_extraction:
      return "no_extraction";
    case CountBucket::one_preference:
      return "one_preference";
    case CountBucket::multi_preference:
      return "multi_preference";
  }
  return "?";
}

OutcomeClass classify_outcome(const ExtractionOutcome& outcome,
                              const std::optional<CandidatePreference>& ground_truth,
                              EvalMode mode) {
  OutcomeClass c;
  const size_t n = outcome.candidates.size();
  c.bucket = n == 0   ? CountBucket::no_extraction
             : n == 1 ? CountBucket::one_preference
                      : CountBucket::multi_preference;

  bool any_match = false;
  if (ground_truth) {
    for (const auto& cand : outcome.candidates) {
      if (cand.path == ground_truth->path) {
        any_match = true;
        break;
      }
    }
  }
  if (mode == EvalMode::in_schema) {
    c.correct = ground_truth ? any_match : n == 0;
    c.over_extraction = c.correct && n > 1;
  } else {
    c.correct = ground_truth ? !any_match : n == 0;
    c.over_extraction = c.correct && n > 0;  // bounded, but something spilled over
  }
  return c;
}

}  // namespace prefmem
