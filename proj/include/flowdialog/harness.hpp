#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "flowdialog/agent.hpp"
#include "flowdialog/evaluation.hpp"
#include "flowdialog/knowledge.hpp"
#include "flowdialog/simulator.hpp"
#include "flowdialog/transcript.hpp"

namespace flowdialog::harness {

/// One test sample. Shared by every dataset importer.
struct Sample {
  std::string id;
  std::string flowchart_id;
  NodePath gt_path;
  std::optional<std::string> reference_dialogue;
  std::vector<simulator::FaqInjection> faq_injections;
  std::optional<int> gt_turns;  // defaults to |gt_path| + injected FAQ turns
  std::vector<std::string> gt_user_turns;  // static reference user turns, if any

  int ground_truth_turns() const;
};

/// Samples file: JSON array of samples, or an object with a "samples" array.
/// Missing ids default to "<flowchart_id>#<index>".
std::vector<Sample> parse_samples(const nlohmann::json& document);
std::vector<Sample> load_samples(const std::filesystem::path& path);

using FlowchartRegistry = std::map<std::string, std::shared_ptr<const Flowchart>>;

FlowchartRegistry load_registry(const std::filesystem::path& dir);

struct Dataset {
  FlowchartRegistry flowcharts;
  std::vector<Sample> samples;

  /// Throws SchemaError naming the first sample whose flowchart is unknown
  /// or whose ground-truth path is not a valid walk.
  void check() const;
};

struct SplitCounts {
  std::size_t root_init = 0;
  std::size_t middle_init = 0;
};

SplitCounts split_counts(const Dataset& dataset);

enum class AgentKind { flow, serialized };

std::string_view to_string(AgentKind kind);

struct BudgetRule {
  std::optional<int> fixed;
  double multiplier = 2.0;

  int budget_for(const Sample& sample) const;
};

struct RunConfig {
  std::filesystem::path dataset;
  std::filesystem::path flowchart_dir;
  std::optional<std::filesystem::path> faqs;
  nlohmann::json agent_binding = {{"kind", "scripted"}, {"echo", true}};
  nlohmann::json simulator_binding = {{"kind", "scripted"}, {"echo", true}};
  nlohmann::json judge_binding;  // null disables the faithfulness judge
  simulator::SimulatorKind simulator = simulator::SimulatorKind::scripted;
  AgentKind agent = AgentKind::flow;
  BudgetRule budget;
  std::optional<int> max_self_loop_hops;
  double faq_threshold = 0.2;
  int parallel = 1;
  int turn_attempts = 2;  // per-turn tries after the binding's own retries
  std::filesystem::path out;
  std::uint64_t seed = 0;

  /// Relative paths resolve against `base_dir`.
  static RunConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
  nlohmann::json to_json() const;
};

/// Everything one episode needs; shared read-only across workers.
struct EpisodeContext {
  llm::BindingPtr agent_binding;
  llm::BindingPtr simulator_binding;
  std::shared_ptr<const knowledge::FaqStore> faqs;
  simulator::SimulatorKind simulator = simulator::SimulatorKind::scripted;
  AgentKind agent = AgentKind::flow;
  BudgetRule budget;
  std::optional<int> max_self_loop_hops;
  double faq_threshold = 0.2;
  int turn_attempts = 2;
  std::uint64_t seed = 0;
};

struct EpisodeResult {
  TranscriptLog log;
  std::optional<evaluation::EpisodeRecord> record;  // nullopt when failed
  std::optional<std::string> failure;               // reason code
  std::string failure_detail;
};

/// Failure reason codes.
inline constexpr std::string_view kReasonOffPath = "simulator_off_path";
inline constexpr std::string_view kReasonGateway = "gateway_error";
inline constexpr std::string_view kReasonAgent = "agent_error";

/// Alternates simulator and agent turns until the agent reaches a terminal,
/// the simulator ends, or the budget runs out.
EpisodeResult run_episode(std::shared_ptr<const Flowchart> fc, const Sample& sample,
                          const EpisodeContext& ctx);

struct SuiteResult {
  evaluation::MetricsReport metrics;
  std::vector<EpisodeResult> episodes;  // dataset order
  nlohmann::json report;                // what report.json holds
};

/// Runs a loaded dataset. Writes report.json, report.txt and logs/ when
/// `out` is non-empty.
SuiteResult run_suite(const Dataset& dataset, const EpisodeContext& ctx, int parallel,
                      const std::filesystem::path& out = {});

/// Loads the dataset and bindings named by the config, then runs it.
SuiteResult run_suite(const RunConfig& cfg);

/// Writes report.json, report.txt and one log per episode under `out`.
void write_outputs(const SuiteResult& result, const std::vector<Sample>& samples,
                   const std::filesystem::path& out, std::string_view label);

/// Serialized report; identical bytes for identical inputs.
std::string render_report(const nlohmann::json& report);

}  // namespace flowdialog::harness
