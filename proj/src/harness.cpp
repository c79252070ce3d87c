#include "flowdialog/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <numeric>
#include <random>
#include <thread>

#include "flowdialog/diversity.hpp"
#include "flowdialog/ingest.hpp"

namespace flowdialog::harness {

using nlohmann::json;
namespace fs = std::filesystem;

int Sample::ground_truth_turns() const {
  if (gt_turns) return *gt_turns;
  return static_cast<int>(gt_path.size() + faq_injections.size());
}

std::vector<Sample> parse_samples(const json& document) {
  const json* arr = &document;
  if (document.is_object()) {
    auto it = document.find("samples");
    if (it == document.end()) throw SchemaError("samples document has no 'samples' array");
    arr = &*it;
  }
  if (!arr->is_array()) throw SchemaError("samples must be a JSON array");
  std::vector<Sample> out;
  for (std::size_t i = 0; i < arr->size(); ++i) {
    const json& j = (*arr)[i];
    const std::string where = "sample " + std::to_string(i);
    try {
      Sample s;
      s.flowchart_id = j.at("flowchart_id").get<std::string>();
      s.gt_path = j.at("gt_path").get<NodePath>();
      s.id = j.value("id", s.flowchart_id + "#" + std::to_string(i));
      if (j.contains("reference_dialogue") && !j["reference_dialogue"].is_null()) {
        s.reference_dialogue = j["reference_dialogue"].get<std::string>();
      }
      if (j.contains("faq_injections")) {
        for (const auto& f : j["faq_injections"]) {
          simulator::FaqInjection inj{f.at("turn").get<int>(), f.at("question").get<std::string>()};
          if (inj.turn < 2) throw SchemaError(where + ": FAQ injections start at turn 2");
          s.faq_injections.push_back(std::move(inj));
        }
      }
      if (j.contains("gt_turns")) {
        s.gt_turns = j["gt_turns"].get<int>();
        if (*s.gt_turns < 1) throw SchemaError(where + ": gt_turns must be >= 1");
      }
      if (j.contains("gt_user_turns")) s.gt_user_turns = j["gt_user_turns"].get<std::vector<std::string>>();
      if (s.gt_path.empty()) throw SchemaError(where + ": empty gt_path");
      out.push_back(std::move(s));
    } catch (const json::exception& e) {
      throw SchemaError(where + ": " + e.what());
    }
  }
  std::set<std::string> ids;
  for (const auto& s : out) {
    if (!ids.insert(s.id).second) throw SchemaError("duplicate sample id '" + s.id + "'");
  }
  return out;
}

std::vector<Sample> load_samples(const fs::path& path) {
  const std::string text = ingest::read_text_file(path);
  try {
    return parse_samples(json::parse(text));
  } catch (const json::parse_error& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
}

FlowchartRegistry load_registry(const fs::path& dir) {
  FlowchartRegistry reg;
  for (auto& fc : ingest::load_flowchart_dir(dir)) {
    const std::string id = fc.id();
    if (!reg.emplace(id, std::make_shared<const Flowchart>(std::move(fc))).second) {
      throw SchemaError("duplicate flowchart id '" + id + "' in " + dir.string());
    }
  }
  return reg;
}

void Dataset::check() const {
  for (const auto& s : samples) {
    auto it = flowcharts.find(s.flowchart_id);
    if (it == flowcharts.end()) {
      throw SchemaError("sample '" + s.id + "' references unknown flowchart '" + s.flowchart_id +
                        "'");
    }
    for (const auto& n : s.gt_path) {
      if (!it->second->contains(n)) {
        throw SchemaError("sample '" + s.id + "': unknown node '" + n + "' in gt_path");
      }
    }
    if (!is_edge_consistent(*it->second, s.gt_path)) {
      throw SchemaError("sample '" + s.id + "': gt_path is not a walk of the flowchart");
    }
  }
}

SplitCounts split_counts(const Dataset& dataset) {
  SplitCounts c;
  for (const auto& s : dataset.samples) {
    auto it = dataset.flowcharts.find(s.flowchart_id);
    if (it == dataset.flowcharts.end()) throw SchemaError("unknown flowchart '" + s.flowchart_id + "'");
    if (s.gt_path.front() == it->second->root()) {
      ++c.root_init;
    } else {
      ++c.middle_init;
    }
  }
  return c;
}

std::string_view to_string(AgentKind kind) {
  return kind == AgentKind::flow ? "flow" : "serialized";
}

int BudgetRule::budget_for(const Sample& sample) const {
  if (fixed) return *fixed;
  return std::max(1, static_cast<int>(std::ceil(multiplier * sample.ground_truth_turns())));
}

RunConfig RunConfig::from_json(const json& j, const fs::path& base_dir) {
  auto resolve = [&](const std::string& p) {
    fs::path path(p);
    return path.is_absolute() || base_dir.empty() ? path : base_dir / path;
  };
  RunConfig c;
  try {
    c.dataset = resolve(j.at("dataset").get<std::string>());
    c.flowchart_dir = resolve(j.at("flowcharts").get<std::string>());
    if (j.contains("faqs") && !j["faqs"].is_null()) c.faqs = resolve(j["faqs"].get<std::string>());
    if (j.contains("agent_binding")) c.agent_binding = j["agent_binding"];
    if (j.contains("simulator_binding")) c.simulator_binding = j["simulator_binding"];
    if (j.contains("judge_binding")) c.judge_binding = j["judge_binding"];
    const std::string sim = j.value("simulator", "scripted");
    if (sim == "scripted") {
      c.simulator = simulator::SimulatorKind::scripted;
    } else if (sim == "llm") {
      c.simulator = simulator::SimulatorKind::llm;
    } else {
      throw SchemaError("unknown simulator kind '" + sim + "'");
    }
    const std::string agent = j.value("agent", "flow");
    if (agent == "flow") {
      c.agent = AgentKind::flow;
    } else if (agent == "serialized") {
      c.agent = AgentKind::serialized;
    } else {
      throw SchemaError("unknown agent kind '" + agent + "'");
    }
    if (j.contains("budget")) {
      const json& b = j["budget"];
      if (b.contains("fixed")) c.budget.fixed = b["fixed"].get<int>();
      c.budget.multiplier = b.value("multiplier", 2.0);
    }
    if (j.contains("max_self_loop_hops")) c.max_self_loop_hops = j["max_self_loop_hops"].get<int>();
    c.faq_threshold = j.value("faq_threshold", 0.2);
    c.parallel = j.value("parallel", 1);
    c.turn_attempts = j.value("turn_attempts", 2);
    if (j.contains("out")) c.out = resolve(j["out"].get<std::string>());
    c.seed = j.value("seed", std::uint64_t{0});
  } catch (const json::exception& e) {
    throw SchemaError(std::string("run config: ") + e.what());
  }
  if (c.parallel < 1) throw SchemaError("run config: parallel must be >= 1");
  if (c.turn_attempts < 1) throw SchemaError("run config: turn_attempts must be >= 1");
  if (c.budget.fixed && *c.budget.fixed < 1) throw SchemaError("run config: budget.fixed must be >= 1");
  if (!(c.budget.multiplier > 0)) throw SchemaError("run config: budget.multiplier must be > 0");
  return c;
}

json RunConfig::to_json() const {
  json budget_j = {{"multiplier", budget.multiplier}};
  if (budget.fixed) budget_j["fixed"] = *budget.fixed;
  json j = {{"dataset", dataset.string()},
            {"flowcharts", flowchart_dir.string()},
            {"agent_binding", agent_binding},
            {"simulator_binding", simulator_binding},
            {"judge_binding", judge_binding},
            {"simulator", simulator == simulator::SimulatorKind::scripted ? "scripted" : "llm"},
            {"agent", std::string(harness::to_string(agent))},
            {"budget", budget_j},
            {"faq_threshold", faq_threshold},
            {"parallel", parallel},
            {"turn_attempts", turn_attempts},
            {"out", out.string()},
            {"seed", seed}};
  if (faqs) j["faqs"] = faqs->string();
  if (max_self_loop_hops) j["max_self_loop_hops"] = *max_self_loop_hops;
  return j;
}

namespace {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

struct EpisodeFailure {
  std::string_view reason;
  std::string detail;
};

template <typename F>
auto with_retries(int attempts, F&& fn) -> decltype(fn()) {
  for (int i = 1;; ++i) {
    try {
      return fn();
    } catch (const GatewayError& e) {
      if (!e.retryable() || i >= attempts) throw;
    }
  }
}

double ms_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

EpisodeResult run_episode(std::shared_ptr<const Flowchart> fc, const Sample& sample,
                          const EpisodeContext& ctx) {
  if (!fc) throw PreconditionError("run_episode: no flowchart");
  if (!ctx.agent_binding) throw PreconditionError("run_episode: no agent binding");
  const auto profile = simulator::build_profile(*fc, sample.gt_path, sample.reference_dialogue);
  const int budget = ctx.budget.budget_for(sample);

  EpisodeResult result;
  result.log = TranscriptLog(LogHeader{sample.id, fc->id(), sample.gt_path, budget,
                                       sample.gt_path.front() == fc->root(),
                                       std::string(to_string(ctx.agent))});

  std::unique_ptr<simulator::UserSimulator> sim;
  if (ctx.simulator == simulator::SimulatorKind::scripted) {
    sim = std::make_unique<simulator::ScriptedSimulator>(profile, sample.faq_injections);
  } else {
    if (!ctx.simulator_binding) throw PreconditionError("run_episode: no simulator binding");
    sim = std::make_unique<simulator::LlmSimulator>(profile, ctx.simulator_binding,
                                                    sample.faq_injections,
                                                    ctx.seed ^ fnv1a(sample.id));
  }
  std::unique_ptr<agent::Session> session;
  if (ctx.agent == AgentKind::flow) {
    agent::AgentConfig cfg;
    cfg.max_self_loop_hops = ctx.max_self_loop_hops;
    cfg.turn_budget = budget;
    cfg.faq_threshold = ctx.faq_threshold;
    session = std::make_unique<agent::FlowAgentSession>(fc, cfg, ctx.agent_binding, ctx.faqs,
                                                        sample.id);
  } else {
    session = std::make_unique<agent::SerializedBaselineSession>(fc, budget, ctx.agent_binding);
  }

  llm::Messages sim_history;
  auto log_user = [&](int turn, const std::string& text, double ms) {
    result.log.append(TurnEntry{turn, Speaker::user, text, std::nullopt, std::nullopt, {}, ms});
    sim_history.push_back({llm::Role::user, text});
  };
  auto log_agent = [&](int turn, const agent::TurnOutcome& o, double ms) {
    result.log.append(TurnEntry{turn, Speaker::agent, o.utterance, o.node, o.kind, o.walk, ms});
    sim_history.push_back({llm::Role::assistant, o.utterance});
  };

  std::optional<EpisodeFailure> failure;
  try {
    int turn = 1;
    auto t0 = std::chrono::steady_clock::now();
    const std::string first = with_retries(ctx.turn_attempts, [&] { return sim->first_utterance(); });
    log_user(turn, first, ms_since(t0));
    t0 = std::chrono::steady_clock::now();
    agent::TurnOutcome outcome =
        with_retries(ctx.turn_attempts, [&] { return session->open(first); });
    log_agent(turn, outcome, ms_since(t0));
    while (session->phase() == agent::Phase::active) {
      ++turn;
      t0 = std::chrono::steady_clock::now();
      const auto next = with_retries(ctx.turn_attempts, [&] {
        return sim->next_user_utterance(outcome.utterance, sim_history, turn);
      });
      if (!next) break;
      log_user(turn, *next, ms_since(t0));
      t0 = std::chrono::steady_clock::now();
      outcome = with_retries(ctx.turn_attempts, [&] { return session->respond(*next); });
      log_agent(turn, outcome, ms_since(t0));
    }
  } catch (const simulator::OffPathError& e) {
    failure = EpisodeFailure{kReasonOffPath, e.what()};
  } catch (const GatewayError& e) {
    failure = EpisodeFailure{kReasonGateway, e.what()};
  } catch (const PreconditionError& e) {
    failure = EpisodeFailure{kReasonAgent, e.what()};
  } catch (const UnknownNodeError& e) {
    failure = EpisodeFailure{kReasonAgent, e.what()};
  } catch (const NoMatchingEdgeError& e) {
    failure = EpisodeFailure{kReasonAgent, e.what()};
  }

  const std::string phase(agent::to_string(session->phase()));
  if (failure) {
    result.log.close(LogFooter{"failed", std::string(failure->reason), phase});
    result.failure = std::string(failure->reason);
    result.failure_detail = failure->detail;
    return result;
  }
  result.log.close(LogFooter{"completed", std::nullopt, phase});
  auto record = episode_to_record(result.log);
  record.check();
  result.record = std::move(record);
  return result;
}

std::string render_report(const json& report) { return report.dump(2) + "\n"; }

namespace {

std::vector<std::string> user_utterances(const TranscriptLog& log) {
  std::vector<std::string> out;
  for (const auto& e : log.entries()) {
    if (e.speaker == Speaker::user) out.push_back(e.utterance);
  }
  return out;
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << content;
}

std::string log_file_name(std::size_t index, const std::string& sample_id) {
  std::string safe;
  for (char c : sample_id) {
    safe += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_') ? c : '_';
  }
  char prefix[16];
  std::snprintf(prefix, sizeof prefix, "%04zu_", index);
  return prefix + safe + ".jsonl";
}

}  // namespace

void write_outputs(const SuiteResult& result, const std::vector<Sample>& samples,
                   const fs::path& out, std::string_view label) {
  fs::create_directories(out / "logs");
  for (std::size_t i = 0; i < result.episodes.size(); ++i) {
    result.episodes[i].log.write(out / "logs" / log_file_name(i, samples[i].id));
  }
  write_file(out / "report.json", render_report(result.report));
  write_file(out / "report.txt", result.report["metrics"].is_null()
                                     ? std::string("no completed episodes\n")
                                     : result.metrics.to_table(label));
}


SuiteResult run_suite(const Dataset& dataset, const EpisodeContext& ctx, int parallel,
                      const fs::path& out) {
  if (dataset.samples.empty()) throw EmptyInputError("dataset has no samples");
  if (parallel < 1) throw PreconditionError("parallel must be >= 1");
  dataset.check();

  const std::size_t n = dataset.samples.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(ctx.seed);
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<std::optional<EpisodeResult>> slots(n);
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    while (true) {
      const std::size_t k = next.fetch_add(1);
      if (k >= n) return;
      {
        std::lock_guard lock(error_mutex);
        if (error) return;
      }
      const std::size_t idx = order[k];
      const Sample& s = dataset.samples[idx];
      try {
        slots[idx] = run_episode(dataset.flowcharts.at(s.flowchart_id), s, ctx);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        return;
      }
    }
  };
  const int workers = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(parallel), n));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int i = 0; i < workers; ++i) pool.emplace_back(worker);
  }
  if (error) std::rethrow_exception(error);

  SuiteResult result;
  std::vector<evaluation::EpisodeRecord> records;
  std::vector<TranscriptLog> completed_logs;
  std::vector<std::vector<std::string>> user_turns;
  json failed = json::array();
  int faq_turns = 0;
  for (std::size_t i = 0; i < n; ++i) {
    EpisodeResult& ep = *slots[i];
    if (ep.record) {
      records.push_back(*ep.record);
      faq_turns += ep.record->faq_turns;
      completed_logs.push_back(ep.log);
      user_turns.push_back(user_utterances(ep.log));
    } else {
      failed.push_back({{"sample_id", dataset.samples[i].id},
                        {"reason", *ep.failure},
                        {"detail", ep.failure_detail}});
    }
    result.episodes.push_back(std::move(ep));
  }

  const SplitCounts splits = split_counts(dataset);
  json report = {{"schema", 1},
                 {"agent", std::string(to_string(ctx.agent))},
                 {"agent_binding", ctx.agent_binding->describe()},
                 {"simulator", ctx.simulator == simulator::SimulatorKind::scripted ? "scripted" : "llm"},
                 {"seed", ctx.seed},
                 {"budget", ctx.budget.fixed ? json{{"fixed", *ctx.budget.fixed}}
                                             : json{{"multiplier", ctx.budget.multiplier}}},
                 {"samples", n},
                 {"splits", {{"root_init", splits.root_init}, {"middle_init", splits.middle_init}}},
                 {"completed", records.size()},
                 {"failed", failed},
                 {"faq_turns", faq_turns}};
  if (ctx.simulator_binding) report["simulator_binding"] = ctx.simulator_binding->describe();
  if (!records.empty()) {
    result.metrics = evaluation::evaluate(records);
    report["metrics"] = result.metrics.to_json();
    report["user_turn_diversity"] = evaluation::diversity(user_turns).to_json();
  } else {
    report["metrics"] = nullptr;
  }
  try {
    const auto acc = faq_local_accuracy(completed_logs);
    report["faq_local_accuracy"] = {
        {"value", acc.value}, {"exchanges", acc.exchanges}, {"correct", acc.correct}};
  } catch (const NoFaqExchangesError&) {
    report["faq_local_accuracy"] = nullptr;
  }
  result.report = std::move(report);
  if (!out.empty()) write_outputs(result, dataset.samples, out, to_string(ctx.agent));
  return result;
}

namespace {

void add_faithfulness(SuiteResult& result, const Dataset& dataset, const llm::ModelBinding& judge,
                      int attempts) {
  std::size_t judged = 0, flagged = 0, violations = 0, errors = 0;
  for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
    const auto& ep = result.episodes[i];
    const auto& gt = dataset.samples[i].gt_user_turns;
    if (!ep.record || gt.empty()) continue;
    try {
      const auto v = with_retries(
          attempts, [&] { return llm::judge_faithfulness(judge, gt, user_utterances(ep.log)); });
      ++judged;
      if (!v.empty()) ++flagged;
      violations += v.size();
    } catch (const GatewayError&) {
      ++errors;
    }
  }
  result.report["faithfulness"] = {{"judged", judged},
                                   {"with_violations", flagged},
                                   {"violations", violations},
                                   {"judge_errors", errors}};
}

}  // namespace

SuiteResult run_suite(const RunConfig& cfg) {
  Dataset dataset;
  dataset.flowcharts = load_registry(cfg.flowchart_dir);
  dataset.samples = load_samples(cfg.dataset);
  if (dataset.samples.empty()) throw EmptyInputError("dataset has no samples: " + cfg.dataset.string());
  dataset.check();

  EpisodeContext ctx;
  ctx.agent_binding = llm::make_binding(cfg.agent_binding);
  if (cfg.simulator == simulator::SimulatorKind::llm) {
    ctx.simulator_binding = llm::make_binding(cfg.simulator_binding);
  }
  if (cfg.faqs) {
    ctx.faqs = std::make_shared<const knowledge::FaqStore>(
        knowledge::ingest_faqs(std::string_view(ingest::read_text_file(*cfg.faqs))));
  }
  ctx.simulator = cfg.simulator;
  ctx.agent = cfg.agent;
  ctx.budget = cfg.budget;
  ctx.max_self_loop_hops = cfg.max_self_loop_hops;
  ctx.faq_threshold = cfg.faq_threshold;
  ctx.turn_attempts = cfg.turn_attempts;
  ctx.seed = cfg.seed;

  auto result = run_suite(dataset, ctx, cfg.parallel);
  if (!cfg.judge_binding.is_null()) {
    add_faithfulness(result, dataset, *llm::make_binding(cfg.judge_binding), cfg.turn_attempts);
  }
  if (!cfg.out.empty()) write_outputs(result, dataset.samples, cfg.out, to_string(cfg.agent));
  return result;
}

}  // namespace flowdialog::harness
