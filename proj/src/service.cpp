#include "flowdialog/service.hpp"

#include <atomic>
#include <cstdlib>
#include <random>

#include <httplib.h>

#include "flowdialog/ingest.hpp"
#include "flowdialog/text.hpp"

namespace flowdialog::service {

using nlohmann::json;
namespace fs = std::filesystem;
using TimePoint = std::chrono::steady_clock::time_point;

ServiceConfig ServiceConfig::from_json(const json& j, const fs::path& base_dir) {
  auto resolve = [&](const std::string& p) {
    fs::path path(p);
    return path.is_absolute() || base_dir.empty() ? path : base_dir / path;
  };
  ServiceConfig c;
  try {
    c.host = j.value("host", c.host);
    c.port = j.value("port", c.port);
    if (j.contains("flowcharts")) c.flowchart_dir = resolve(j["flowcharts"].get<std::string>());
    if (j.contains("faqs") && !j["faqs"].is_null()) c.faqs = resolve(j["faqs"].get<std::string>());
    if (j.contains("binding")) c.binding = j["binding"];
    if (j.contains("turn_budget")) c.agent.turn_budget = j["turn_budget"].get<int>();
    if (j.contains("max_self_loop_hops")) {
      c.agent.max_self_loop_hops = j["max_self_loop_hops"].get<int>();
    }
    c.agent.faq_threshold = j.value("faq_threshold", c.agent.faq_threshold);
    c.expiry = std::chrono::seconds(j.value("expiry_s", 30 * 60));
    if (j.contains("transcripts") && !j["transcripts"].is_null()) {
      c.transcript_dir = resolve(j["transcripts"].get<std::string>());
    }
  } catch (const json::exception& e) {
    throw SchemaError(std::string("service config: ") + e.what());
  }
  c.agent.check();
  return c;
}

void ServiceConfig::apply_env() {
  auto env = [](const char* name) -> std::optional<std::string> {
    const char* v = std::getenv(name);
    if (!v || !*v) return std::nullopt;
    return std::string(v);
  };
  if (auto v = env("FLOWDIALOG_HOST")) host = *v;
  if (auto v = env("FLOWDIALOG_PORT")) {
    try {
      port = std::stoi(*v);
    } catch (const std::exception&) {
      throw SchemaError("FLOWDIALOG_PORT is not a number: " + *v);
    }
  }
  if (auto v = env("FLOWDIALOG_FLOWCHARTS")) flowchart_dir = *v;
  if (auto v = env("FLOWDIALOG_FAQS")) faqs = fs::path(*v);
  if (auto v = env("FLOWDIALOG_TRANSCRIPTS")) transcript_dir = fs::path(*v);
  if (auto v = env("FLOWDIALOG_BINDING")) {
    try {
      binding = json::parse(*v);
    } catch (const json::parse_error& e) {
      throw SchemaError(std::string("FLOWDIALOG_BINDING: ") + e.what());
    }
  }
}

std::string random_session_id() {
  static thread_local std::mt19937_64 rng([] {
    std::random_device rd;
    std::seed_seq seq{rd(), rd(), rd(), rd(), rd(), rd(), rd(), rd()};
    return std::mt19937_64(seq);
  }());
  char buf[33];
  std::snprintf(buf, sizeof buf, "%016llx%016llx", static_cast<unsigned long long>(rng()),
                static_cast<unsigned long long>(rng()));
  return buf;
}

struct DialogueService::Slot {
  std::mutex mutex;
  std::string id;
  std::string flowchart_id;
  std::unique_ptr<agent::FlowAgentSession> session;
  harness::TranscriptLog log;
  TimePoint created;
  std::atomic<TimePoint::rep> last_activity{0};
};

DialogueService::DialogueService(harness::FlowchartRegistry flowcharts, llm::BindingPtr binding,
                                 std::shared_ptr<const knowledge::FaqStore> faqs,
                                 ServiceConfig config, Clock clock)
    : flowcharts_(std::move(flowcharts)),
      binding_(std::move(binding)),
      faqs_(std::move(faqs)),
      config_(std::move(config)),
      clock_(std::move(clock)) {
  if (!binding_) throw PreconditionError("service needs a model binding");
  config_.agent.check();
}

std::unique_ptr<DialogueService> DialogueService::from_config(const ServiceConfig& config) {
  if (config.flowchart_dir.empty()) throw SchemaError("service config: no flowchart directory");
  auto registry = harness::load_registry(config.flowchart_dir);
  std::shared_ptr<const knowledge::FaqStore> faqs;
  if (config.faqs) {
    faqs = std::make_shared<const knowledge::FaqStore>(
        knowledge::ingest_faqs(std::string_view(ingest::read_text_file(*config.faqs))));
  }
  return std::make_unique<DialogueService>(std::move(registry), llm::make_binding(config.binding),
                                           std::move(faqs), config);
}

namespace {

ServiceError gateway_failure(const GatewayError& e) {
  return ServiceError(503, "gateway_error", e.what());
}

void require_message(const std::string& message) {
  if (text::trim(message).empty()) throw ServiceError(400, "invalid_message", "message is empty");
}

}  // namespace

json DialogueService::turn_json(const Slot& slot, const agent::TurnOutcome& outcome) const {
  const auto& state = slot.session->state();
  return {{"session_id", slot.id},
          {"flowchart_id", slot.flowchart_id},
          {"reply", outcome.utterance},
          {"node", outcome.node},
          {"outcome", std::string(agent::to_string(outcome.kind))},
          {"phase", std::string(agent::to_string(state.phase))},
          {"path", state.predicted},
          {"turn", state.turn}};
}

void DialogueService::persist(const Slot& slot) const {
  if (!config_.transcript_dir) return;
  auto log = slot.log;
  const auto phase = slot.session->phase();
  if (phase != agent::Phase::active) {
    log.close(harness::LogFooter{"completed", std::nullopt, std::string(agent::to_string(phase))});
  }
  log.write(*config_.transcript_dir / (slot.id + ".jsonl"));
}

json DialogueService::create_session(const std::string& flowchart_id, const std::string& message) {
  auto it = flowcharts_.find(flowchart_id);
  if (it == flowcharts_.end()) {
    throw ServiceError(404, "unknown_flowchart", "unknown flowchart '" + flowchart_id + "'");
  }
  require_message(message);

  auto slot = std::make_shared<Slot>();
  slot->flowchart_id = flowchart_id;
  slot->created = clock_();
  slot->last_activity = slot->created.time_since_epoch().count();
  {
    std::lock_guard lock(store_mutex_);
    do {
      slot->id = random_session_id();
    } while (sessions_.count(slot->id) || expired_.count(slot->id));
  }
  slot->session = std::make_unique<agent::FlowAgentSession>(it->second, config_.agent, binding_,
                                                            faqs_, slot->id);
  slot->log = harness::TranscriptLog(harness::LogHeader{
      slot->id, flowchart_id, {}, config_.agent.turn_budget, true, "flow"});

  agent::TurnOutcome outcome;
  try {
    outcome = slot->session->open(message);
  } catch (const GatewayError& e) {
    throw gateway_failure(e);
  }
  slot->log.append({1, harness::Speaker::user, message, std::nullopt, std::nullopt, {}, 0});
  slot->log.append({1, harness::Speaker::agent, outcome.utterance, outcome.node, outcome.kind,
                    outcome.walk, 0});
  persist(*slot);
  json out = turn_json(*slot, outcome);
  std::lock_guard lock(store_mutex_);
  sessions_.emplace(slot->id, slot);
  return out;
}

std::shared_ptr<DialogueService::Slot> DialogueService::find_live(const std::string& session_id) {
  std::lock_guard lock(store_mutex_);
  if (expired_.count(session_id)) {
    throw ServiceError(410, "session_expired", "session '" + session_id + "' has expired");
  }
  auto it = sessions_.find(session_id);
  if (it == sessions_.end()) {
    throw ServiceError(404, "unknown_session", "unknown session '" + session_id + "'");
  }
  const TimePoint last{TimePoint::duration(it->second->last_activity.load())};
  if (clock_() - last > config_.expiry) {
    expired_.insert(session_id);
    sessions_.erase(it);
    throw ServiceError(410, "session_expired", "session '" + session_id + "' has expired");
  }
  return it->second;
}

json DialogueService::post_message(const std::string& session_id, const std::string& message) {
  auto slot = find_live(session_id);
  std::lock_guard lock(slot->mutex);
  if (slot->session->phase() != agent::Phase::active) {
    throw ServiceError(409, "session_terminal",
                       "session '" + session_id + "' is " +
                           std::string(agent::to_string(slot->session->phase())));
  }
  require_message(message);
  agent::TurnOutcome outcome;
  try {
    outcome = slot->session->respond(message);
  } catch (const GatewayError& e) {
    throw gateway_failure(e);
  }
  const int turn = slot->session->turn();
  slot->log.append({turn, harness::Speaker::user, message, std::nullopt, std::nullopt, {}, 0});
  slot->log.append({turn, harness::Speaker::agent, outcome.utterance, outcome.node, outcome.kind,
                    outcome.walk, 0});
  slot->last_activity = clock_().time_since_epoch().count();
  persist(*slot);
  return turn_json(*slot, outcome);
}

json DialogueService::get_session(const std::string& session_id) {
  auto slot = find_live(session_id);
  std::lock_guard lock(slot->mutex);
  const auto& state = slot->session->state();
  json history = json::array();
  for (const auto& m : state.history) {
    history.push_back({{"role", std::string(llm::to_string(m.role))}, {"content", m.content}});
  }
  return {{"session_id", slot->id},
          {"flowchart_id", slot->flowchart_id},
          {"node", state.current},
          {"phase", std::string(agent::to_string(state.phase))},
          {"path", state.predicted},
          {"turn", state.turn},
          {"history", history}};
}

json DialogueService::list_flowcharts() const {
  json out = json::array();
  for (const auto& [id, fc] : flowcharts_) {
    out.push_back({{"id", id},
                   {"root", fc->root()},
                   {"nodes", fc->nodes().size()},
                   {"edges", fc->edges().size()}});
  }
  return out;
}

json DialogueService::flowchart_view(const std::string& flowchart_id) const {
  auto it = flowcharts_.find(flowchart_id);
  if (it == flowcharts_.end()) {
    throw ServiceError(404, "unknown_flowchart", "unknown flowchart '" + flowchart_id + "'");
  }
  const Flowchart& fc = *it->second;
  json nodes = json::array();
  for (const auto& n : fc.nodes()) {
    nodes.push_back({{"id", n.id}, {"text", n.text}, {"kind", std::string(to_string(n.kind))}});
  }
  json edges = json::array();
  for (const auto& e : fc.edges()) {
    edges.push_back({{"src", e.source}, {"dst", e.target}, {"cond", e.condition}});
  }
  return {{"id", fc.id()}, {"root", fc.root()}, {"nodes", nodes}, {"edges", edges}};
}

std::size_t DialogueService::sweep() {
  std::lock_guard lock(store_mutex_);
  const auto now = clock_();
  std::size_t n = 0;
  for (auto it = sessions_.begin(); it != sessions_.end();) {
    const TimePoint last{TimePoint::duration(it->second->last_activity.load())};
    if (now - last > config_.expiry) {
      expired_.insert(it->first);
      it = sessions_.erase(it);
      ++n;
    } else {
      ++it;
    }
  }
  return n;
}

std::size_t DialogueService::session_count() const {
  std::lock_guard lock(store_mutex_);
  return sessions_.size();
}

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& code,
                const std::string& message) {
  send_json(res, status,
            {{"error", {{"code", code}, {"message", message}, {"retryable", status == 503}}}});
}

json parse_body(const httplib::Request& req) {
  try {
    json body = json::parse(req.body);
    if (!body.is_object()) throw ServiceError(400, "invalid_body", "body must be a JSON object");
    return body;
  } catch (const json::parse_error& e) {
    throw ServiceError(400, "invalid_body", e.what());
  }
}

std::string string_field(const json& body, const char* name) {
  auto it = body.find(name);
  if (it == body.end() || !it->is_string()) {
    throw ServiceError(400, "invalid_body", std::string("missing string field '") + name + "'");
  }
  return it->get<std::string>();
}

template <typename F>
void guarded(httplib::Response& res, F&& fn) {
  try {
    fn();
  } catch (const ServiceError& e) {
    send_error(res, e.status(), e.code(), e.what());
  } catch (const GatewayError& e) {
    send_error(res, 503, "gateway_error", e.what());
  } catch (const PreconditionError& e) {
    send_error(res, 400, "precondition", e.what());
  } catch (const std::exception& e) {
    send_error(res, 500, "internal", e.what());
  }
}

}  // namespace

void DialogueService::register_routes(httplib::Server& server) {
  server.Post("/sessions", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const json body = parse_body(req);
      send_json(res, 201,
                create_session(string_field(body, "flowchart_id"), string_field(body, "message")));
    });
  });
  server.Post(R"(/sessions/([0-9A-Za-z]+)/messages)",
              [this](const httplib::Request& req, httplib::Response& res) {
                guarded(res, [&] {
                  const json body = parse_body(req);
                  send_json(res, 200, post_message(req.matches[1], string_field(body, "message")));
                });
              });
  server.Get(R"(/sessions/([0-9A-Za-z]+))",
             [this](const httplib::Request& req, httplib::Response& res) {
               guarded(res, [&] { send_json(res, 200, get_session(req.matches[1])); });
             });
  server.Get("/flowcharts", [this](const httplib::Request&, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 200, list_flowcharts()); });
  });
  server.Get(R"(/flowcharts/([^/]+)/graph)",
             [this](const httplib::Request& req, httplib::Response& res) {
               guarded(res, [&] { send_json(res, 200, flowchart_view(req.matches[1])); });
             });
}

}  // namespace flowdialog::service
