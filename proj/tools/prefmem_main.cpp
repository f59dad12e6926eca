#include <filesystem>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"
#include "prefmem/config.hpp"
#include "prefmem/dataset.hpp"
#include "prefmem/errors.hpp"
#include "prefmem/evaluation.hpp"
#include "prefmem/selftest.hpp"
#include "prefmem/service.hpp"
#include "prefmem/util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

prefmem::ServiceConfig resolve_config(const std::string& config_path, bool force_mock) {
  prefmem::ServiceConfig config;
  if (!config_path.empty()) {
    config = prefmem::load_config_file(config_path);
  } else {
    if (const char* key = std::getenv(config.gateway.api_key_env.c_str())) {
      config.gateway.api_key = key;
    }
    // Bare invocations from the repo root get the bundled mock rule table.
    const char* bundled_playbook = "data/fixture/mock_playbook.json";
    if (config.gateway.mock && fs::exists(bundled_playbook)) {
      config.gateway.mock_playbook = bundled_playbook;
    }
  }
  if (force_mock) config.gateway.mock = true;
  return config;
}

json read_json_file(const std::string& path) {
  try {
    return json::parse(prefmem::util::read_text_file(path));
  } catch (const json::parse_error& e) {
    throw prefmem::ParseError(std::string("cannot parse ") + path + ": " + e.what());
  }
}

int run_eval(const prefmem::ServiceConfig& config, const std::string& experiment,
             const fs::path& corpus_path, const std::string& part, uint64_t seed,
             const fs::path& out_dir) {
  prefmem::CategoryTaxonomy taxonomy = prefmem::load_taxonomy_file(config.taxonomy_file);
  prefmem::CorpusLoadResult corpus = prefmem::load_corpus(corpus_path, taxonomy);
  for (const auto& issue : corpus.issues) std::cerr << "invalid record: " << issue << "\n";
  if (corpus.points.empty()) {
    std::cerr << "corpus is empty\n";
    return 1;
  }

  std::vector<prefmem::DataPoint> points = corpus.points;
  if (part != "all") {
    auto [validation, test] = prefmem::split_corpus(corpus.points, 0.5, 0.5, seed);
    points = part == "validation" ? std::move(validation) : std::move(test);
  }
  std::cout << "evaluating " << points.size() << " data points (" << part << ")\n";

  std::unique_ptr<prefmem::Gateway> gateway = prefmem::make_gateway(config.gateway);
  fs::create_directories(out_dir);
  prefmem::evaluation::Harness harness{taxonomy,
                                       *gateway,
                                       config.gateway.mock ? "mock-chat" : config.gateway.chat_model,
                                       config.gateway.mock ? "mock-embed"
                                                           : config.gateway.embedding_model,
                                       config.gateway.embedding_dim,
                                       out_dir / "scratch"};
  prefmem::evaluation::EvalReport report;
  const bool all = experiment == "all";
  if (all || experiment == "in-schema") prefmem::evaluation::run_in_schema(harness, points, report);
  if (all || experiment == "out-of-schema") {
    prefmem::evaluation::run_out_of_schema(harness, points, report);
  }
  if (all || experiment == "maintenance") {
    prefmem::evaluation::run_maintenance(harness, points, report);
  }
  if (all || experiment == "retrieval") prefmem::evaluation::run_retrieval(harness, points, report);

  const std::string table =
      prefmem::evaluation::render_report(report, prefmem::evaluation::ReportFormat::plain_table);
  prefmem::util::write_text_file((out_dir / "report.txt").string(), table);
  prefmem::util::write_text_file(
      (out_dir / "report.json").string(),
      prefmem::evaluation::render_report(report, prefmem::evaluation::ReportFormat::structured_text));
  if (report.has_in_schema || report.has_out_of_schema) {
    prefmem::util::write_text_file(
        (out_dir / "confusion.txt").string(),
        prefmem::evaluation::render_report(report,
                                           prefmem::evaluation::ReportFormat::confusion_matrix_plot));
  }
  std::cout << table;
  std::cout << "reports written to " << out_dir.string() << "\n";
  return report.errors.empty() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Category-bound long-term preference memory for conversational assistants"};
  app.require_subcommand(1);
  app.fallthrough();  // --config/--mock may follow the subcommand

  std::string config_path;
  bool force_mock = false;
  app.add_option("--config", config_path, "Service configuration file (JSON)");
  app.add_flag("--mock", force_mock, "Force the deterministic offline backend");

  // extract
  auto* cmd_extract = app.add_subcommand("extract", "Run extraction over one transcript");
  std::string transcript_path;
  std::string user_id = "local";
  cmd_extract->add_option("--transcript", transcript_path, "Transcript JSON file")->required();
  cmd_extract->add_option("--user", user_id, "User id (used for opt-out state)");

  // ingest
  auto* cmd_ingest = app.add_subcommand("ingest", "Extract + maintain a transcript into the store");
  cmd_ingest->add_option("--transcript", transcript_path, "Transcript JSON file")->required();
  cmd_ingest->add_option("--user", user_id, "User id")->required();

  // retrieve
  auto* cmd_retrieve = app.add_subcommand("retrieve", "Rank stored preferences for an utterance");
  std::string utterance;
  int k = 0;
  std::string dynamic_sub;
  cmd_retrieve->add_option("--user", user_id, "User id")->required();
  cmd_retrieve->add_option("--utterance", utterance, "Query utterance")->required();
  cmd_retrieve->add_option("--k", k, "Fixed number of results (default: config)");
  cmd_retrieve->add_option("--dynamic-sub", dynamic_sub,
                           "Dynamic-n mode: k = stored count in this sub-category");

  // eval
  auto* cmd_eval = app.add_subcommand("eval", "Run benchmark experiments over a corpus");
  std::string experiment = "all";
  std::string corpus_path;
  std::string part = "all";
  uint64_t seed = 42;
  std::string out_dir = "eval_out";
  cmd_eval
      ->add_option("--experiment", experiment,
                   "in-schema | out-of-schema | maintenance | retrieval | all")
      ->check(CLI::IsMember({"in-schema", "out-of-schema", "maintenance", "retrieval", "all"}));
  cmd_eval->add_option("--corpus", corpus_path, "Corpus file or directory")->required();
  cmd_eval->add_option("--part", part, "all | validation | test (50-50 split)")
      ->check(CLI::IsMember({"all", "validation", "test"}));
  cmd_eval->add_option("--seed", seed, "Split seed");
  cmd_eval->add_option("--out", out_dir, "Report output directory");

  // serve
  auto* cmd_serve = app.add_subcommand("serve", "Start the HTTP service");

  // selftest
  auto* cmd_selftest = app.add_subcommand("selftest", "Offline acceptance flow on the fixture");
  std::string data_dir = "data";
  std::string selftest_out = "selftest_out";
  bool update_golden = false;
  cmd_selftest->add_option("--data", data_dir, "Bundled data directory");
  cmd_selftest->add_option("--out", selftest_out, "Scratch/report directory");
  cmd_selftest->add_flag("--update-golden", update_golden, "Rewrite golden report files");

  CLI11_PARSE(app, argc, argv);

  try {
    if (cmd_selftest->parsed()) {
      prefmem::SelftestOptions options;
      options.data_dir = data_dir;
      options.out_dir = selftest_out;
      options.golden_dir = fs::path(data_dir) / "golden";
      options.update_golden = update_golden;
      return prefmem::run_selftest(options, std::cout);
    }

    prefmem::ServiceConfig config = resolve_config(config_path, force_mock);

    if (cmd_eval->parsed()) {
      return run_eval(config, experiment, corpus_path, part, seed, out_dir);
    }

    if (cmd_serve->parsed()) {
      prefmem::Service service(config);
      int port = service.start();
      std::cout << "listening on " << port << " (storage: " << config.storage_root.string()
                << ", backend: " << service.gateway().backend().name() << ")\n";
      std::cout << "press enter to stop\n";
      std::cin.get();
      service.stop();
      return 0;
    }

    prefmem::Service service(config);
    if (cmd_extract->parsed()) {
      // Extraction only: report candidates without touching the store.
      json body = read_json_file(transcript_path);
      prefmem::ConversationTranscript transcript = prefmem::transcript_from_json(body);
      prefmem::CategoryTaxonomy effective = prefmem::opt_out(
          service.taxonomy(), std::vector<std::string>(service.store().opt_outs(user_id).begin(),
                                                       service.store().opt_outs(user_id).end()));
      prefmem::CompiledSchema schema = prefmem::compile_schema(effective);
      prefmem::ExtractionOutcome outcome = prefmem::extract(
          service.gateway(), transcript, schema,
          prefmem::ExtractOptions{config.gateway.mock ? "mock-chat" : config.gateway.chat_model});
      json candidates = json::array();
      for (const auto& c : outcome.candidates) {
        candidates.push_back({{"main", c.path.main},
                              {"sub", c.path.sub},
                              {"detail", c.path.detail},
                              {"value", c.value},
                              {"sentence", c.source_sentence}});
      }
      std::cout << json{{"structurally_valid", outcome.structurally_valid},
                        {"discarded_sentinel_count", outcome.discarded_sentinel_count},
                        {"candidates", candidates}}
                       .dump(2)
                << "\n";
      return 0;
    }
    if (cmd_ingest->parsed()) {
      json body = read_json_file(transcript_path);
      std::cout << service.ingest_conversation(user_id, body).dump(2) << "\n";
      return 0;
    }
    if (cmd_retrieve->parsed()) {
      json body = {{"utterance", utterance}};
      if (!dynamic_sub.empty()) {
        body["dynamic_sub"] = dynamic_sub;
      } else if (k > 0) {
        body["k"] = k;
      }
      std::cout << service.retrieve_preferences(user_id, body).dump(2) << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
