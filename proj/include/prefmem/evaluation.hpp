#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "prefmem/dataset.hpp"
#include "prefmem/gateway.hpp"
#include "prefmem/taxonomy.hpp"

namespace prefmem::evaluation {

enum class Level { main, sub, detail };

std::string to_string(Level level);

struct LevelScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  int category_count = 0;
  long tp = 0;
  long fp = 0;
  long fn = 0;
};

// The per-point decisions micro-averaging is computed from: each extracted
// candidate counts as one decision (TP when its path matches the ground
// truth at the level's granularity, FP otherwise); an unextracted ground
// truth at that granularity counts one FN.
struct ExtractionDecisions {
  CategoryPath ground_truth;
  std::vector<CategoryPath> candidates;
};

LevelScore micro_prf(const std::vector<ExtractionDecisions>& decisions, Level level,
                     int category_count);

// Multi-label confusion matrix: rows are true labels plus a no-true-label
// row, columns are predicted labels plus a no-predicted-label column.
struct ConfusionMatrix {
  static constexpr const char* kNoTrueLabel = "NTL";
  static constexpr const char* kNoPredictedLabel = "NPL";

  std::vector<std::string> labels;
  std::vector<std::vector<long>> counts;  // (labels+1) x (labels+1)

  void init(std::vector<std::string> label_ids);
  void add(const std::optional<std::string>& true_label,
           const std::optional<std::string>& predicted_label);
  bool empty() const { return labels.empty(); }
  std::vector<std::vector<double>> row_normalized() const;
};

struct MaintenanceRow {
  long count = 0;
  std::map<std::string, long> action_counts;  // pass/update/append
  std::map<std::string, double> distribution() const;
};

struct RetrievalSection {
  // mode ("sentence_only" | "enriched") -> offset -> accuracy
  std::map<std::string, std::map<int, double>> accuracy;
  double avg_n = 0.0;
  double avg_store_size = 0.0;
  int points = 0;
};

struct EvalReport {
  bool has_in_schema = false;
  std::map<std::string, long> histogram_in;  // no_extraction / one_preference / multi_preference
  double validity_rate_in = 0.0;
  std::map<std::string, LevelScore> per_level;  // main / sub / detail
  ConfusionMatrix detail_confusion_in;

  bool has_out_of_schema = false;
  std::map<std::string, long> histogram_out;
  double validity_rate_out = 0.0;
  long spillover_count = 0;  // bounded but extracted into a sibling category
  ConfusionMatrix sub_confusion_out;

  bool has_maintenance = false;
  // segment ("MP" | "SP") -> utterance type -> row
  std::map<std::string, std::map<std::string, MaintenanceRow>> maintenance;
  double redundant_reduction = 0.0;      // equal handled as pass-or-update
  double contradiction_reduction = 0.0;  // negate handled as update
  long maintenance_skipped = 0;

  bool has_retrieval = false;
  RetrievalSection retrieval;

  std::vector<std::string> errors;

  nlohmann::json to_json() const;
};

struct Harness {
  const CategoryTaxonomy& taxonomy;
  Gateway& gateway;
  std::string chat_model = "mock-chat";
  std::string embedding_model = "mock-embed";
  size_t embedding_dim = 256;
  std::filesystem::path scratch_dir;  // working storage for primed stores
};

void run_in_schema(Harness& harness, const std::vector<DataPoint>& points, EvalReport& report);
void run_out_of_schema(Harness& harness, const std::vector<DataPoint>& points,
                       EvalReport& report);
void run_maintenance(Harness& harness, const std::vector<DataPoint>& points, EvalReport& report);
void run_retrieval(Harness& harness, const std::vector<DataPoint>& points, EvalReport& report);

enum class ReportFormat { plain_table, structured_text, confusion_matrix_plot };

// Deterministic rendering; throws ValidationError when the requested format
// has no completed section to show.
std::string render_report(const EvalReport& report, ReportFormat format);

}  // namespace prefmem::evaluation
