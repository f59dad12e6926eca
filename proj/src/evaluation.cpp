#include "prefmem/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>

#include "prefmem/errors.hpp"
#include "prefmem/extraction.hpp"
#include "prefmem/maintenance.hpp"
#include "prefmem/prefstore.hpp"
#include "prefmem/retrieval.hpp"
#include "prefmem/schema.hpp"
#include "prefmem/util.hpp"

namespace prefmem::evaluation {

using nlohmann::json;

std::string to_string(Level level) {
  switch (level) {
    case Level::main:
      return "main";
    case Level::sub:
      return "sub";
    case Level::detail:
      return "detail";
  }
  return "?";
}

namespace {

bool matches_at(const CategoryPath& candidate, const CategoryPath& truth, Level level) {
  switch (level) {
    case Level::main:
      return candidate.main == truth.main;
    case Level::sub:
      return candidate.main == truth.main && candidate.sub == truth.sub;
    case Level::detail:
      return candidate == truth;
  }
  return false;
}

std::string fmt(double v, int decimals = 4) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
  return buf;
}

}  // namespace

LevelScore micro_prf(const std::vector<ExtractionDecisions>& decisions, Level level,
                     int category_count) {
  LevelScore s;
  s.category_count = category_count;
  for (const auto& d : decisions) {
    bool truth_found = false;
    for (const auto& c : d.candidates) {
      if (matches_at(c, d.ground_truth, level)) {
        ++s.tp;
        truth_found = true;
      } else {
        ++s.fp;
      }
    }
    if (!truth_found) ++s.fn;
  }
  s.precision = (s.tp + s.fp) > 0 ? static_cast<double>(s.tp) / static_cast<double>(s.tp + s.fp)
                                  : 0.0;
  s.recall =
      (s.tp + s.fn) > 0 ? static_cast<double>(s.tp) / static_cast<double>(s.tp + s.fn) : 0.0;
  s.f1 = (s.precision + s.recall) > 0.0
             ? 2.0 * s.precision * s.recall / (s.precision + s.recall)
             : 0.0;
  return s;
}

void ConfusionMatrix::init(std::vector<std::string> label_ids) {
  labels = std::move(label_ids);
  std::sort(labels.begin(), labels.end());
  counts.assign(labels.size() + 1, std::vector<long>(labels.size() + 1, 0));
}

void ConfusionMatrix::add(const std::optional<std::string>& true_label,
                          const std::optional<std::string>& predicted_label) {
  auto index_of = [&](const std::optional<std::string>& label) -> size_t {
    if (!label) return labels.size();  // NTL row / NPL column
    auto it = std::lower_bound(labels.begin(), labels.end(), *label);
    if (it == labels.end() || *it != *label) {
      throw ValidationError("confusion matrix label not registered: " + *label);
    }
    return static_cast<size_t>(it - labels.begin());
  };
  counts.at(index_of(true_label)).at(index_of(predicted_label)) += 1;
}

std::vector<std::vector<double>> ConfusionMatrix::row_normalized() const {
  std::vector<std::vector<double>> out(counts.size(),
                                       std::vector<double>(counts.empty() ? 0 : counts[0].size()));
  for (size_t r = 0; r < counts.size(); ++r) {
    long total = 0;
    for (long c : counts[r]) total += c;
    for (size_t c = 0; c < counts[r].size(); ++c) {
      out[r][c] = total > 0 ? static_cast<double>(counts[r][c]) / static_cast<double>(total) : 0.0;
    }
  }
  return out;
}

std::map<std::string, double> MaintenanceRow::distribution() const {
  std::map<std::string, double> dist;
  for (const char* action : {"pass", "update", "append"}) {
    long c = 0;
    if (auto it = action_counts.find(action); it != action_counts.end()) c = it->second;
    dist[action] = count > 0 ? static_cast<double>(c) / static_cast<double>(count) : 0.0;
  }
  return dist;
}

namespace {

void ensure_histogram_keys(std::map<std::string, long>& histogram) {
  for (const char* key : {"no_extraction", "one_preference", "multi_preference"}) {
    histogram.emplace(key, 0);
  }
}

json confusion_to_json(const ConfusionMatrix& cm) {
  json rows = json::array();
  for (const auto& row : cm.counts) rows.push_back(row);
  return json{{"labels", cm.labels}, {"counts", rows}};
}

std::vector<std::string> detail_ids(const CategoryTaxonomy& taxonomy) {
  std::vector<std::string> ids;
  for (const auto& m : taxonomy.mains) {
    for (const auto& s : m.subs) {
      for (const auto& d : s.details) ids.push_back(d.id);
    }
  }
  return ids;
}

std::vector<std::string> sub_ids(const CategoryTaxonomy& taxonomy) {
  std::vector<std::string> ids;
  for (const auto& m : taxonomy.mains) {
    for (const auto& s : m.subs) ids.push_back(s.id);
  }
  return ids;
}

}  // namespace

void run_in_schema(Harness& harness, const std::vector<DataPoint>& points, EvalReport& report) {
  CompiledSchema schema = compile_schema(harness.taxonomy);
  ExtractOptions opts{harness.chat_model};

  report.has_in_schema = true;
  ensure_histogram_keys(report.histogram_in);
  report.detail_confusion_in.init(detail_ids(harness.taxonomy));

  std::vector<ExtractionDecisions> decisions;
  long valid = 0;
  long processed = 0;
  for (const auto& p : points) {
    ExtractionOutcome outcome;
    try {
      outcome = extract(harness.gateway, p.extraction_conversation, schema, opts);
    } catch (const Error& e) {
      report.errors.push_back("in_schema " + p.id + ": " + e.what());
      continue;
    }
    ++processed;
    if (outcome.structurally_valid) ++valid;
    OutcomeClass cls = classify_outcome(outcome, p.ground_truth, EvalMode::in_schema);
    report.histogram_in[to_string(cls.bucket)] += 1;

    ExtractionDecisions d;
    d.ground_truth = p.ground_truth.path;
    for (const auto& c : outcome.candidates) d.candidates.push_back(c.path);
    if (d.candidates.empty()) {
      report.detail_confusion_in.add(p.ground_truth.path.detail, std::nullopt);
    } else {
      for (const auto& c : d.candidates) {
        report.detail_confusion_in.add(p.ground_truth.path.detail, c.detail);
      }
    }
    decisions.push_back(std::move(d));
  }
  report.validity_rate_in =
      processed > 0 ? static_cast<double>(valid) / static_cast<double>(processed) : 0.0;
  report.per_level["main"] =
      micro_prf(decisions, Level::main, static_cast<int>(harness.taxonomy.main_count()));
  report.per_level["sub"] =
      micro_prf(decisions, Level::sub, static_cast<int>(harness.taxonomy.sub_count()));
  report.per_level["detail"] =
      micro_prf(decisions, Level::detail, static_cast<int>(harness.taxonomy.detail_count()));
}

void run_out_of_schema(Harness& harness, const std::vector<DataPoint>& points,
                       EvalReport& report) {
  ExtractOptions opts{harness.chat_model};
  report.has_out_of_schema = true;
  ensure_histogram_keys(report.histogram_out);
  report.sub_confusion_out.init(sub_ids(harness.taxonomy));

  long valid = 0;
  long processed = 0;
  for (const auto& p : points) {
    ExtractionOutcome outcome;
    try {
      CategoryTaxonomy reduced = opt_out(harness.taxonomy, {p.ground_truth.path.sub});
      CompiledSchema schema = compile_schema(reduced);
      outcome = extract(harness.gateway, p.extraction_conversation, schema, opts);
    } catch (const Error& e) {
      report.errors.push_back("out_of_schema " + p.id + ": " + e.what());
      continue;
    }
    ++processed;
    if (outcome.structurally_valid) ++valid;
    OutcomeClass cls = classify_outcome(outcome, p.ground_truth, EvalMode::out_of_schema);
    report.histogram_out[to_string(cls.bucket)] += 1;
    if (cls.over_extraction) ++report.spillover_count;
    if (outcome.candidates.empty()) {
      report.sub_confusion_out.add(p.ground_truth.path.sub, std::nullopt);
    } else {
      for (const auto& c : outcome.candidates) {
        report.sub_confusion_out.add(p.ground_truth.path.sub, c.path.sub);
      }
    }
  }
  report.validity_rate_out =
      processed > 0 ? static_cast<double>(valid) / static_cast<double>(processed) : 0.0;
}

namespace {

struct PrimedStore {
  std::unique_ptr<PreferenceStore> store;
  std::map<std::string, std::string> stored_id_by_point;  // only perfect extractions
  std::set<std::string> users;
};

// Replays every extraction conversation and stores the preferences whose
// extraction was perfect: exactly one candidate whose path equals the ground
// truth at all three levels.
PrimedStore prime_store(Harness& harness, const std::vector<DataPoint>& points,
                        const std::string& name, EvalReport& report) {
  PrimedStore primed;
  std::filesystem::path root = harness.scratch_dir / name;
  std::filesystem::remove_all(root);
  StoreOptions store_opts;
  store_opts.embedding_dim = harness.embedding_dim;
  primed.store = std::make_unique<PreferenceStore>(root, harness.taxonomy, store_opts);

  CompiledSchema schema = compile_schema(harness.taxonomy);
  ExtractOptions opts{harness.chat_model};
  for (const auto& p : points) {
    try {
      ExtractionOutcome outcome = extract(harness.gateway, p.extraction_conversation, schema, opts);
      if (outcome.candidates.size() != 1 ||
          !(outcome.candidates.front().path == p.ground_truth.path)) {
        continue;  // not a perfect extraction; point is excluded downstream
      }
      const CandidatePreference& c = outcome.candidates.front();
      const DetailCategory* detail = harness.taxonomy.find_detail(c.path);
      EmbeddingVector embedding = harness.gateway.embed(
          enriched_text(detail->display_name, c.value, c.source_sentence),
          harness.embedding_model);
      Preference stored = primed.store->insert(p.user_id, c, embedding);
      primed.stored_id_by_point[p.id] = stored.id;
      primed.users.insert(p.user_id);
    } catch (const Error& e) {
      report.errors.push_back("prime " + p.id + ": " + e.what());
    }
  }
  return primed;
}

}  // namespace

void run_maintenance(Harness& harness, const std::vector<DataPoint>& points, EvalReport& report) {
  report.has_maintenance = true;
  PrimedStore primed = prime_store(harness, points, "maintenance_store", report);

  CompiledSchema schema = compile_schema(harness.taxonomy);
  ExtractOptions extract_opts{harness.chat_model};
  maintenance::Options maint_opts;
  maint_opts.chat_model = harness.chat_model;
  maint_opts.embedding_model = harness.embedding_model;

  for (const auto& p : points) {
    if (!primed.stored_id_by_point.count(p.id)) {
      report.maintenance_skipped += 3;
      continue;
    }
    const DetailCategory* detail = harness.taxonomy.find_detail(p.ground_truth.path);
    const std::string segment = to_string(detail->type);
    const std::pair<const char*, const std::string*> utterances[] = {
        {"equal", &p.maintenance_utterances.equal},
        {"negate", &p.maintenance_utterances.negate},
        {"different", &p.maintenance_utterances.different},
    };
    for (const auto& [type, text] : utterances) {
      try {
        ConversationTranscript t{p.id + "/" + type, {Turn{"user", *text}}};
        ExtractionOutcome outcome = extract(harness.gateway, t, schema, extract_opts);
        if (outcome.candidates.size() != 1 ||
            !(outcome.candidates.front().path == p.ground_truth.path)) {
          ++report.maintenance_skipped;
          continue;
        }
        std::vector<Preference> existing =
            primed.store->by_detail_category(p.user_id, p.ground_truth.path);
        maintenance::Decision decision = maintenance::decide(
            harness.gateway, outcome.candidates.front(), existing, harness.taxonomy, maint_opts);
        MaintenanceRow& row = report.maintenance[segment][type];
        row.count += 1;
        row.action_counts[maintenance::to_string(decision.action)] += 1;
      } catch (const Error& e) {
        report.errors.push_back("maintenance " + p.id + "/" + type + ": " + e.what());
        ++report.maintenance_skipped;
      }
    }
  }

  // Updating an equal preference leaves the same end state as passing it;
  // negated preferences are resolved by updates.
  long equal_total = 0;
  long equal_kept = 0;
  long negate_total = 0;
  long negate_updated = 0;
  for (auto& [segment, rows] : report.maintenance) {
    for (auto& [type, row] : rows) {
      if (type == "equal") {
        equal_total += row.count;
        equal_kept += row.action_counts["pass"] + row.action_counts["update"];
      } else if (type == "negate") {
        negate_total += row.count;
        negate_updated += row.action_counts["update"];
      }
    }
  }
  report.redundant_reduction =
      equal_total > 0 ? static_cast<double>(equal_kept) / static_cast<double>(equal_total) : 0.0;
  report.contradiction_reduction =
      negate_total > 0 ? static_cast<double>(negate_updated) / static_cast<double>(negate_total)
                       : 0.0;
}

void run_retrieval(Harness& harness, const std::vector<DataPoint>& points, EvalReport& report) {
  report.has_retrieval = true;
  PrimedStore primed = prime_store(harness, points, "retrieval_store", report);

  RetrievalOptions opts;
  opts.embedding_model = harness.embedding_model;

  std::map<std::string, EmbeddingVector> sentence_cache;  // pref id -> sentence-only embedding
  std::vector<QueryOutcome> enriched;
  std::vector<QueryOutcome> sentence_only;
  double n_sum = 0.0;

  for (const auto& p : points) {
    auto it = primed.stored_id_by_point.find(p.id);
    if (it == primed.stored_id_by_point.end()) continue;
    StoreSnapshot snapshot = primed.store->snapshot(p.user_id);
    const int n =
        static_cast<int>(primed.store->count_by_subcategory(p.user_id, p.ground_truth.path.sub));

    QueryOutcome enriched_outcome;
    enriched_outcome.n = n;
    enriched_outcome.ground_truth_id = it->second;
    RetrievalQuery query{p.user_id, p.retrieval_utterance,
                         static_cast<int>(snapshot.preferences.size()), std::nullopt};
    try {
      for (const auto& r : retrieve(harness.gateway, query, snapshot, opts)) {
        enriched_outcome.ranked_ids.push_back(r.preference.id);
      }

      // Sentence-only baseline: rank by the reveal sentence alone.
      EmbeddingVector query_embedding =
          harness.gateway.embed(p.retrieval_utterance, harness.embedding_model);
      std::vector<std::pair<double, const Preference*>> scored;
      for (const auto& pref : snapshot.preferences) {
        auto cached = sentence_cache.find(pref.id);
        if (cached == sentence_cache.end()) {
          cached = sentence_cache
                       .emplace(pref.id, harness.gateway.embed(pref.source_sentence,
                                                               harness.embedding_model))
                       .first;
        }
        scored.push_back({cosine(query_embedding, cached->second), &pref});
      }
      std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        if (a.second->created_at != b.second->created_at) {
          return a.second->created_at < b.second->created_at;
        }
        return a.second->id < b.second->id;
      });
      QueryOutcome sentence_outcome;
      sentence_outcome.n = n;
      sentence_outcome.ground_truth_id = it->second;
      for (const auto& [_, pref] : scored) sentence_outcome.ranked_ids.push_back(pref->id);

      enriched.push_back(std::move(enriched_outcome));
      sentence_only.push_back(std::move(sentence_outcome));
      n_sum += n;
    } catch (const Error& e) {
      report.errors.push_back("retrieval " + p.id + ": " + e.what());
    }
  }

  report.retrieval.accuracy["enriched"] = topk_accuracy(enriched);
  report.retrieval.accuracy["sentence_only"] = topk_accuracy(sentence_only);
  report.retrieval.points = static_cast<int>(enriched.size());
  report.retrieval.avg_n = enriched.empty() ? 0.0 : n_sum / static_cast<double>(enriched.size());
  double store_total = 0.0;
  for (const auto& user : primed.users) {
    store_total += static_cast<double>(primed.store->size(user));
  }
  report.retrieval.avg_store_size =
      primed.users.empty() ? 0.0 : store_total / static_cast<double>(primed.users.size());
}

json EvalReport::to_json() const {
  json j = json::object();
  if (has_in_schema) {
    json levels = json::object();
    for (const auto& [name, s] : per_level) {
      levels[name] = {{"categories", s.category_count}, {"precision", s.precision},
                      {"recall", s.recall},             {"f1", s.f1},
                      {"tp", s.tp},                     {"fp", s.fp},
                      {"fn", s.fn}};
    }
    j["in_schema"] = {{"histogram", histogram_in},
                      {"validity_rate", validity_rate_in},
                      {"per_level", levels},
                      {"detail_confusion", confusion_to_json(detail_confusion_in)}};
  }
  if (has_out_of_schema) {
    j["out_of_schema"] = {{"histogram", histogram_out},
                          {"validity_rate", validity_rate_out},
                          {"spillover_count", spillover_count},
                          {"sub_confusion", confusion_to_json(sub_confusion_out)}};
  }
  if (has_maintenance) {
    json rows = json::object();
    for (const auto& [segment, by_type] : maintenance) {
      for (const auto& [type, row] : by_type) {
        rows[segment][type] = {{"count", row.count}, {"distribution", row.distribution()}};
      }
    }
    j["maintenance"] = {{"matrix", rows},
                        {"redundant_reduction", redundant_reduction},
                        {"contradiction_reduction", contradiction_reduction},
                        {"skipped", maintenance_skipped}};
  }
  if (has_retrieval) {
    json acc = json::object();
    for (const auto& [mode, by_offset] : retrieval.accuracy) {
      for (const auto& [offset, value] : by_offset) {
        acc[mode]["n+" + std::to_string(offset)] = value;
      }
    }
    j["retrieval"] = {{"accuracy", acc},
                      {"avg_n", retrieval.avg_n},
                      {"avg_store_size", retrieval.avg_store_size},
                      {"points", retrieval.points}};
  }
  if (!errors.empty()) j["errors"] = errors;
  return j;
}

namespace {

long histogram_total(const std::map<std::string, long>& histogram) {
  long total = 0;
  for (const auto& [_, v] : histogram) total += v;
  return total;
}

std::string pct(long count, long total) {
  if (total == 0) return "-";
  return std::to_string(
             static_cast<long>(std::llround(100.0 * static_cast<double>(count) /
                                            static_cast<double>(total)))) +
         "%";
}

void render_extraction_tables(const EvalReport& r, std::ostringstream& out) {
  out << "== Extraction outcomes ==\n";
  const long total_in = r.has_in_schema ? histogram_total(r.histogram_in) : 0;
  const long total_out = r.has_out_of_schema ? histogram_total(r.histogram_out) : 0;
  auto cell = [](const std::string& text) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%-15s", text.c_str());
    return std::string(buf);
  };
  out << cell("outcome") << "  ";
  if (r.has_in_schema) out << cell("in-schema");
  if (r.has_out_of_schema) out << cell("out-of-schema");
  out << "\n";
  const std::pair<const char*, const char*> rows[] = {
      {"no_extraction", "no extraction"},
      {"one_preference", "1 preference"},
      {"multi_preference", "2+ preferences"},
  };
  for (const auto& [key, label] : rows) {
    out << cell(label) << "  ";
    if (r.has_in_schema) {
      out << cell(pct(r.histogram_in.at(key), total_in) + " (" +
                  std::to_string(r.histogram_in.at(key)) + ")");
    }
    if (r.has_out_of_schema) {
      out << cell(pct(r.histogram_out.at(key), total_out) + " (" +
                  std::to_string(r.histogram_out.at(key)) + ")");
    }
    out << "\n";
  }
  out << cell("valid output") << "  ";
  if (r.has_in_schema) out << cell(fmt(r.validity_rate_in, 2));
  if (r.has_out_of_schema) out << cell(fmt(r.validity_rate_out, 2));
  out << "\n";
  if (r.has_out_of_schema) out << "spillover extractions: " << r.spillover_count << "\n";
  out << "\n";
  if (r.has_in_schema) {
    out << "== In-schema scores (micro-averaged) ==\n";
    out << "level    categories  precision  recall  f1\n";
    for (const char* level : {"main", "sub", "detail"}) {
      auto it = r.per_level.find(level);
      if (it == r.per_level.end()) continue;
      const LevelScore& s = it->second;
      char line[128];
      std::snprintf(line, sizeof(line), "%-8s %-11d %-10s %-7s %s\n", level, s.category_count,
                    fmt(s.precision).c_str(), fmt(s.recall).c_str(), fmt(s.f1).c_str());
      out << line;
    }
    out << "\n";
  }

}

void render_maintenance_table(const EvalReport& r, std::ostringstream& out) {
  out << "== Maintenance function calls ==\n";
  out << "segment  type       n     pass    update  append\n";
  for (const char* segment : {"MP", "SP"}) {
    auto sit = r.maintenance.find(segment);
    if (sit == r.maintenance.end()) continue;
    for (const char* type : {"equal", "negate", "different"}) {
      auto tit = sit->second.find(type);
      if (tit == sit->second.end()) continue;
      const MaintenanceRow& row = tit->second;
      auto dist = row.distribution();
      const bool sp = std::string(segment) == "SP";
      char line[160];
      std::snprintf(line, sizeof(line), "%-8s %-10s %-5ld %-7s %-7s %s\n", segment, type,
                    row.count, fmt(dist["pass"], 2).c_str(), fmt(dist["update"], 2).c_str(),
                    sp ? "-" : fmt(dist["append"], 2).c_str());
      out << line;
    }
  }
  out << "redundant reduction (equal -> pass/update): " << fmt(r.redundant_reduction, 2) << "\n";
  out << "contradiction reduction (negate -> update): " << fmt(r.contradiction_reduction, 2)
      << "\n";
  out << "skipped utterances: " << r.maintenance_skipped << "\n\n";
}

void render_retrieval_table(const EvalReport& r, std::ostringstream& out) {
  out << "== Retrieval top-k accuracy (dynamic n) ==\n";
  out << "embedding       n      n+1    n+2\n";
  for (const char* mode : {"sentence_only", "enriched"}) {
    auto it = r.retrieval.accuracy.find(mode);
    if (it == r.retrieval.accuracy.end()) continue;
    char line[128];
    auto at = [&](int o) {
      auto oit = it->second.find(o);
      return oit == it->second.end() ? std::string("-") : fmt(oit->second, 2);
    };
    std::snprintf(line, sizeof(line), "%-15s %-6s %-6s %s\n", mode, at(0).c_str(), at(1).c_str(),
                  at(2).c_str());
    out << line;
  }
  out << "avg n: " << fmt(r.retrieval.avg_n, 2)
      << "  avg store size: " << fmt(r.retrieval.avg_store_size, 2)
      << "  points: " << r.retrieval.points << "\n\n";
}

void render_confusion(const ConfusionMatrix& cm, const std::string& title,
                      std::ostringstream& out) {
  out << "== " << title << " (row-normalized) ==\n";
  for (size_t i = 0; i < cm.labels.size(); ++i) {
    out << "  [" << i << "] " << cm.labels[i] << "\n";
  }
  out << "  [" << cm.labels.size() << "] " << ConfusionMatrix::kNoPredictedLabel
      << " (column) / " << ConfusionMatrix::kNoTrueLabel << " (row)\n";
  auto norm = cm.row_normalized();
  out << "        ";
  for (size_t c = 0; c < (norm.empty() ? 0 : norm[0].size()); ++c) {
    char cell[16];
    std::snprintf(cell, sizeof(cell), "%5zu ", c);
    out << cell;
  }
  out << "\n";
  for (size_t rix = 0; rix < norm.size(); ++rix) {
    char label[16];
    std::snprintf(label, sizeof(label), "  [%2zu]  ", rix);
    out << label;
    for (double v : norm[rix]) {
      char cell[16];
      std::snprintf(cell, sizeof(cell), "%5.2f ", v);
      out << cell;
    }
    out << "\n";
  }
  out << "\n";
}

}  // namespace

namespace {

std::string strip_trailing_spaces(const std::string& text) {
  std::string out;
  out.reserve(text.size());
  size_t start = 0;
  while (start <= text.size()) {
    size_t end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    size_t last = end;
    while (last > start && text[last - 1] == ' ') --last;
    out.append(text, start, last - start);
    if (end < text.size()) out.push_back('\n');
    start = end + 1;
  }
  return out;
}

}  // namespace

std::string render_report(const EvalReport& report, ReportFormat format) {
  const bool any_section = report.has_in_schema || report.has_out_of_schema ||
                           report.has_maintenance || report.has_retrieval;
  if (!any_section) throw ValidationError("report has no completed section to render");

  if (format == ReportFormat::structured_text) {
    return report.to_json().dump(2) + "\n";
  }
  std::ostringstream out;
  if (format == ReportFormat::confusion_matrix_plot) {
    bool rendered = false;
    if (report.has_in_schema && !report.detail_confusion_in.empty()) {
      render_confusion(report.detail_confusion_in, "In-schema detail-level confusion", out);
      rendered = true;
    }
    if (report.has_out_of_schema && !report.sub_confusion_out.empty()) {
      render_confusion(report.sub_confusion_out, "Out-of-schema sub-level confusion", out);
      rendered = true;
    }
    if (!rendered) throw ValidationError("report carries no confusion matrices to render");
    return strip_trailing_spaces(out.str());
  }

  if (report.has_in_schema || report.has_out_of_schema) render_extraction_tables(report, out);
  if (report.has_maintenance) render_maintenance_table(report, out);
  if (report.has_retrieval) render_retrieval_table(report, out);
  if (!report.errors.empty()) {
    out << "== Errors ==\n";
    for (const auto& e : report.errors) out << e << "\n";
  }
  return strip_trailing_spaces(out.str());
}

}  // namespace prefmem::evaluation
