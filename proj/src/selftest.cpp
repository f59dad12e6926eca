#include "prefmem/selftest.hpp"

#include <map>

#include "prefmem/config.hpp"
#include "prefmem/dataset.hpp"
#include "prefmem/errors.hpp"
#include "prefmem/evaluation.hpp"
#include "prefmem/extraction.hpp"
#include "prefmem/maintenance.hpp"
#include "prefmem/prefstore.hpp"
#include "prefmem/retrieval.hpp"
#include "prefmem/schema.hpp"
#include "prefmem/util.hpp"

namespace prefmem {

namespace {

struct StepLog {
  std::ostream& log;
  bool all_passed = true;

  void step(const std::string& name, bool ok, const std::string& detail = "") {
    log << (ok ? "PASS " : "FAIL ") << name;
    if (!detail.empty()) log << ": " << detail;
    log << "\n";
    if (!ok) all_passed = false;
  }
};

}  // namespace

int run_selftest(const SelftestOptions& options, std::ostream& log) {
  StepLog steps{log};
  try {
    GatewayConfig gateway_config;
    gateway_config.mock = true;
    gateway_config.mock_playbook = (options.data_dir / "fixture" / "mock_playbook.json").string();
    // Sentinel: any attempt to build a live backend is a hard failure.
    std::unique_ptr<Gateway> gateway_holder =
        make_gateway(gateway_config, [](const GatewayConfig&) -> std::shared_ptr<ChatBackend> {
          throw TransportError("selftest attempted to construct a network backend");
        });
    Gateway& gateway = *gateway_holder;

    CategoryTaxonomy taxonomy = load_taxonomy_file(options.data_dir / "taxonomy.json");
    steps.step("taxonomy",
               taxonomy.main_count() == 4 && taxonomy.sub_count() == 11 &&
                   taxonomy.detail_count() == 41,
               std::to_string(taxonomy.main_count()) + "/" + std::to_string(taxonomy.sub_count()) +
                   "/" + std::to_string(taxonomy.detail_count()) + " categories");

    CorpusLoadResult corpus = load_corpus(options.data_dir / "fixture", taxonomy);
    steps.step("corpus", corpus.points.size() == 20 && corpus.issues.empty(),
               std::to_string(corpus.points.size()) + " fixture points");

    // Ingest every extraction conversation; first pass must append them all.
    std::filesystem::path store_root = options.out_dir / "selftest_store";
    std::filesystem::remove_all(store_root);
    StoreOptions store_options;
    store_options.embedding_dim = gateway_config.embedding_dim;
    PreferenceStore store(store_root, taxonomy, store_options);

    CompiledSchema schema = compile_schema(taxonomy);
    maintenance::Options maint_opts;
    size_t appended = 0;
    for (const auto& p : corpus.points) {
      ExtractionOutcome outcome = extract(gateway, p.extraction_conversation, schema);
      auto records =
          maintenance::ingest(p.user_id, outcome.candidates, store, gateway, taxonomy, maint_opts);
      for (const auto& r : records) {
        if (r.error.empty() && r.decision.action == maintenance::Action::append) ++appended;
      }
    }
    size_t total = 0;
    for (const auto& user : store.users()) total += store.size(user);
    steps.step("ingest", appended == corpus.points.size() && total == corpus.points.size(),
               std::to_string(appended) + " appends, " + std::to_string(total) + " stored");

    // Second pass must be pure dedup: pass decisions only, sizes unchanged.
    size_t passes = 0;
    for (const auto& p : corpus.points) {
      ExtractionOutcome outcome = extract(gateway, p.extraction_conversation, schema);
      auto records =
          maintenance::ingest(p.user_id, outcome.candidates, store, gateway, taxonomy, maint_opts);
      for (const auto& r : records) {
        if (r.error.empty() && r.decision.action == maintenance::Action::pass) ++passes;
      }
    }
    size_t total_after = 0;
    for (const auto& user : store.users()) total_after += store.size(user);
    steps.step("maintain", passes == corpus.points.size() && total_after == total,
               std::to_string(passes) + " passes, store size unchanged");

    // Spot-check retrieval through the stored embeddings.
    {
      StoreSnapshot snapshot = store.snapshot("user_7");
      RetrievalQuery query{"user_7", "Where should I check traffic information for the drive?", 3,
                           std::string("traffic_and_conditions")};
      auto ranked = retrieve(gateway, query, snapshot);
      bool ok = ranked.size() == 1 &&
                ranked.front().preference.path.detail == "traffic_information_source_preferences";
      steps.step("retrieve", ok,
                 ok ? "dynamic n=1 returned the traffic-source preference"
                    : "unexpected ranking");
    }

    // Full evaluation pipeline + report rendering.
    evaluation::Harness harness{taxonomy, gateway, "mock-chat", "mock-embed",
                                gateway_config.embedding_dim, options.out_dir / "eval_scratch"};
    evaluation::EvalReport report;
    evaluation::run_in_schema(harness, corpus.points, report);
    evaluation::run_out_of_schema(harness, corpus.points, report);
    evaluation::run_maintenance(harness, corpus.points, report);
    evaluation::run_retrieval(harness, corpus.points, report);

    bool eval_ok = report.errors.empty() && report.per_level.at("detail").f1 == 1.0 &&
                   report.histogram_out.at("no_extraction") ==
                       static_cast<long>(corpus.points.size()) &&
                   report.redundant_reduction == 1.0 && report.contradiction_reduction == 1.0;
    steps.step("eval", eval_ok, "mock oracle metrics");

    std::filesystem::create_directories(options.out_dir);
    const std::map<std::string, std::string> rendered = {
        {"report.txt", evaluation::render_report(report, evaluation::ReportFormat::plain_table)},
        {"report.json",
         evaluation::render_report(report, evaluation::ReportFormat::structured_text)},
        {"confusion.txt",
         evaluation::render_report(report, evaluation::ReportFormat::confusion_matrix_plot)},
    };
    for (const auto& [name, content] : rendered) {
      util::write_text_file((options.out_dir / name).string(), content);
    }

    if (options.update_golden) {
      std::filesystem::create_directories(options.golden_dir);
      for (const auto& [name, content] : rendered) {
        util::write_text_file((options.golden_dir / name).string(), content);
      }
      steps.step("golden", true, "golden files rewritten");
    } else if (!options.golden_dir.empty()) {
      bool identical = true;
      std::string mismatch;
      for (const auto& [name, content] : rendered) {
        std::filesystem::path golden = options.golden_dir / name;
        if (!std::filesystem::exists(golden) ||
            util::read_text_file(golden.string()) != content) {
          identical = false;
          mismatch = name;
          break;
        }
      }
      steps.step("golden", identical,
                 identical ? "report bytes match" : "mismatch in " + mismatch);
    }
  } catch (const std::exception& e) {
    steps.step("selftest", false, e.what());
  }
  return steps.all_passed ? 0 : 1;
}

}  // namespace prefmem
