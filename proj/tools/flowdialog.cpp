// Command-line front end: flowchart validation, suite runs, replay, reports,
// a local chat loop and the HTTP service.

#include <cstdio>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <httplib.h>

#include "flowdialog/harness.hpp"
#include "flowdialog/ingest.hpp"
#include "flowdialog/service.hpp"
#include "flowdialog/text.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace flowdialog;

namespace {

bool is_flowchart_file(const fs::path& p) {
  const auto ext = p.extension().string();
  return ext == ".json" || ext == ".puml" || ext == ".plantuml" || ext == ".pu";
}

// Reports every violation rather than stopping at the first one.
bool validate_file(const fs::path& path) {
  try {
    if (path.extension() == ".json") {
      const auto doc = ingest::EdgeListDocument::from_json(json::parse(ingest::read_text_file(path)));
      const auto violations = validate(doc.data);
      if (!violations.empty()) {
        std::printf("INVALID %s\n", path.string().c_str());
        for (const auto& v : violations) std::printf("  %s\n", v.message().c_str());
        return false;
      }
    }
    const Flowchart fc = ingest::load_flowchart_file(path);
    std::printf("OK %s (%zu nodes, %zu edges)\n", path.string().c_str(), fc.nodes().size(),
                fc.edges().size());
    return true;
  } catch (const std::exception& e) {
    std::printf("INVALID %s: %s\n", path.string().c_str(), e.what());
    return false;
  }
}

json read_json_file(const fs::path& path) {
  try {
    return json::parse(ingest::read_text_file(path));
  } catch (const json::parse_error& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
}

int chat_loop(const fs::path& flowchart, const std::optional<fs::path>& faqs,
              const std::optional<fs::path>& binding_file, int turn_budget) {
  auto fc = std::make_shared<const Flowchart>(ingest::load_flowchart_file(flowchart));
  std::shared_ptr<const knowledge::FaqStore> store;
  if (faqs) {
    store = std::make_shared<const knowledge::FaqStore>(
        knowledge::ingest_faqs(std::string_view(ingest::read_text_file(*faqs))));
  }
  const json binding_cfg =
      binding_file ? read_json_file(*binding_file) : json{{"kind", "scripted"}, {"echo", true}};
  agent::AgentConfig cfg;
  cfg.turn_budget = turn_budget;
  agent::FlowAgentSession session(fc, cfg, llm::make_binding(binding_cfg), store, "chat");

  std::printf("flowchart %s, root %s. Describe your problem (empty line quits).\n",
              fc->id().c_str(), fc->root().c_str());
  std::string line;
  bool opened = false;
  while (std::printf("> "), std::fflush(stdout), std::getline(std::cin, line)) {
    if (text::trim(line).empty()) break;
    const auto outcome = opened ? session.respond(line) : session.open(line);
    opened = true;
    std::printf("[%s %s] %s\n", outcome.node.c_str(),
                std::string(agent::to_string(outcome.kind)).c_str(), outcome.utterance.c_str());
    if (session.phase() != agent::Phase::active) {
      std::printf("session %s\n", std::string(agent::to_string(session.phase())).c_str());
      break;
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Flowchart-grounded dialogue agent and evaluation harness"};
  app.require_subcommand(1);

  auto* validate_cmd = app.add_subcommand("validate", "Check flowchart files or directories");
  std::vector<std::string> validate_paths;
  validate_cmd->add_option("paths", validate_paths, "Flowchart files or directories")->required();

  auto* run_cmd = app.add_subcommand("run", "Run an evaluation suite");
  std::string config_path;
  std::optional<std::string> dataset, out;
  std::optional<double> multiplier;
  std::optional<std::uint64_t> seed;
  std::optional<int> parallel;
  run_cmd->add_option("--config", config_path, "Run configuration (JSON)")->required();
  run_cmd->add_option("--dataset", dataset, "Samples file, overrides the config");
  run_cmd->add_option("--budget-multiplier", multiplier, "Turn budget as a multiple of gt turns");
  run_cmd->add_option("--seed", seed, "Random seed");
  run_cmd->add_option("--parallel", parallel, "Concurrent episodes");
  run_cmd->add_option("--out", out, "Output directory");

  auto* replay_cmd = app.add_subcommand("replay", "Rebuild the episode record from a log");
  std::string log_path;
  replay_cmd->add_option("log", log_path, "Transcript (JSON lines)")->required();

  auto* report_cmd = app.add_subcommand("report", "Print the metrics table of a report");
  std::string report_path;
  report_cmd->add_option("report", report_path, "report.json")->required();

  auto* chat_cmd = app.add_subcommand("chat", "Talk to the agent on stdin");
  std::string chat_flowchart;
  std::optional<std::string> chat_faqs, chat_binding;
  int chat_budget = 50;
  chat_cmd->add_option("--flowchart", chat_flowchart, "Flowchart file")->required();
  chat_cmd->add_option("--faqs", chat_faqs, "FAQ file");
  chat_cmd->add_option("--binding", chat_binding, "Binding configuration (JSON)");
  chat_cmd->add_option("--turn-budget", chat_budget, "Turn budget");

  auto* serve_cmd = app.add_subcommand("serve", "Start the HTTP service");
  std::optional<std::string> serve_config;
  serve_cmd->add_option("--config", serve_config, "Service configuration (JSON)");

  auto* paths_cmd = app.add_subcommand("paths", "List root-to-terminal paths of a flowchart");
  std::string paths_file;
  int revisit_bound = 0;
  paths_cmd->add_option("flowchart", paths_file, "Flowchart file")->required();
  paths_cmd->add_option("--revisit-bound", revisit_bound, "Extra visits allowed per node");

  auto* convert_cmd = app.add_subcommand("convert", "Print a flowchart as an edge-list document");
  std::string convert_file;
  convert_cmd->add_option("flowchart", convert_file, "Flowchart file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*validate_cmd) {
      bool ok = true;
      for (const auto& p : validate_paths) {
        if (fs::is_directory(p)) {
          std::vector<fs::path> files;
          for (const auto& e : fs::directory_iterator(p)) {
            if (e.is_regular_file() && is_flowchart_file(e.path())) files.push_back(e.path());
          }
          std::sort(files.begin(), files.end());
          for (const auto& f : files) ok = validate_file(f) && ok;
        } else {
          ok = validate_file(p) && ok;
        }
      }
      return ok ? 0 : 1;
    }
    if (*run_cmd) {
      auto cfg = harness::RunConfig::from_json(read_json_file(config_path),
                                               fs::path(config_path).parent_path());
      if (dataset) cfg.dataset = *dataset;
      if (multiplier) {
        cfg.budget.fixed.reset();
        cfg.budget.multiplier = *multiplier;
      }
      if (seed) cfg.seed = *seed;
      if (parallel) cfg.parallel = *parallel;
      if (out) cfg.out = *out;
      const auto result = harness::run_suite(cfg);
      if (result.report["metrics"].is_null()) {
        std::printf("no completed episodes\n");
      } else {
        std::fputs(result.metrics.to_table(harness::to_string(cfg.agent)).c_str(), stdout);
      }
      std::printf("episodes: %zu completed, %zu failed\n",
                  result.report["completed"].get<std::size_t>(), result.report["failed"].size());
      if (!cfg.out.empty()) std::printf("report: %s\n", (cfg.out / "report.json").string().c_str());
      return 0;
    }
    if (*replay_cmd) {
      const auto r = harness::replay(log_path);
      const json j = {{"sample_id", r.sample_id},         {"predicted", r.predicted},
                      {"ground_truth", r.ground_truth},   {"turns", r.turns},
                      {"budget", r.budget},               {"transitions", r.transitions},
                      {"gt_initial_is_root", r.gt_initial_is_root}, {"faq_turns", r.faq_turns}};
      std::printf("%s\n", j.dump(2).c_str());
      return 0;
    }
    if (*report_cmd) {
      const json report = read_json_file(report_path);
      const json& metrics = report.contains("metrics") ? report["metrics"] : report;
      if (metrics.is_null()) {
        std::printf("no completed episodes\n");
        return 1;
      }
      std::fputs(evaluation::MetricsReport::from_json(metrics)
                     .to_table(report.value("agent", std::string("run")))
                     .c_str(),
                 stdout);
      return 0;
    }
    if (*chat_cmd) {
      std::optional<fs::path> faqs, binding;
      if (chat_faqs) faqs = *chat_faqs;
      if (chat_binding) binding = *chat_binding;
      return chat_loop(chat_flowchart, faqs, binding, chat_budget);
    }
    if (*serve_cmd) {
      service::ServiceConfig cfg;
      if (serve_config) {
        cfg = service::ServiceConfig::from_json(read_json_file(*serve_config),
                                                fs::path(*serve_config).parent_path());
      }
      cfg.apply_env();
      auto svc = service::DialogueService::from_config(cfg);
      httplib::Server server;
      svc->register_routes(server);
      std::printf("listening on %s:%d\n", cfg.host.c_str(), cfg.port);
      std::fflush(stdout);
      if (!server.listen(cfg.host, cfg.port)) {
        std::fprintf(stderr, "cannot bind %s:%d\n", cfg.host.c_str(), cfg.port);
        return 1;
      }
      return 0;
    }
    if (*paths_cmd) {
      const Flowchart fc = ingest::load_flowchart_file(paths_file);
      json arr = json::array();
      for (const auto& p : ingest::ground_truth_paths(fc, revisit_bound)) {
        arr.push_back({{"nodes", p.nodes}, {"attributes", p.attributes}, {"conditions", p.conditions}});
      }
      std::printf("%s\n", arr.dump(2).c_str());
      return 0;
    }
    if (*convert_cmd) {
      const Flowchart fc = ingest::load_flowchart_file(convert_file);
      std::printf("%s\n", ingest::serialize_edge_list(fc).to_json().dump(2).c_str());
      return 0;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
