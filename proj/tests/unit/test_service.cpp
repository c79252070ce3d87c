#include <doctest.h>

#include <atomic>
#include <cstdlib>
#include <regex>
#include <set>
#include <thread>

#include <httplib.h>

#include "fixtures.hpp"
#include "flowdialog/service.hpp"

using namespace flowdialog;
using namespace flowdialog::service;
using nlohmann::json;

namespace {

harness::FlowchartRegistry registry() {
  return harness::load_registry(testsupport::fixture_path("flowcharts"));
}

std::shared_ptr<const knowledge::FaqStore> faqs() {
  return std::make_shared<const knowledge::FaqStore>(std::vector<knowledge::FaqEntry>{
      {"What does an open circuit mean?", "The current path is broken.", {}}});
}

std::shared_ptr<llm::ScriptedBinding> binding() {
  auto b = testsupport::closed_loop_binding();
  b->add_subject_response("What does an open circuit mean?", "DOMAIN_QUESTION");
  return b;
}

// Manually advanced clock.
struct FakeClock {
  std::shared_ptr<std::atomic<long long>> seconds = std::make_shared<std::atomic<long long>>(1000);
  Clock fn() const {
    auto s = seconds;
    return [s] { return std::chrono::steady_clock::time_point(std::chrono::seconds(s->load())); };
  }
  void advance(long long s) { *seconds += s; }
};

int status_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const ServiceError& e) {
    return e.status();
  }
  return 0;
}

class Flaky final : public llm::ModelBinding {
 public:
  std::string complete(const llm::Messages& m, const llm::DecodingParams& p) const override {
    if (down) throw TransportError("endpoint unreachable");
    return inner->complete(m, p);
  }
  std::string_view kind() const noexcept override { return "flaky"; }
  json describe() const override { return {{"kind", "flaky"}}; }
  std::shared_ptr<llm::ScriptedBinding> inner = binding();
  mutable std::atomic<bool> down{false};
};

// Serves the routes on an ephemeral port for the lifetime of the object.
class LiveServer {
 public:
  explicit LiveServer(DialogueService& svc) {
    svc.register_routes(server_);
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~LiveServer() {
    server_.stop();
    thread_.join();
  }
  httplib::Client client() const { return httplib::Client("127.0.0.1", port_); }

 private:
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
};

}  // namespace

TEST_CASE("session ids are 32 hex characters and distinct") {
  std::set<std::string> ids;
  const std::regex hex("[0-9a-f]{32}");
  for (int i = 0; i < 1000; ++i) {
    const auto id = random_session_id();
    CHECK(std::regex_match(id, hex));
    ids.insert(id);
  }
  CHECK(ids.size() == 1000);
}

TEST_CASE("a session runs to a terminal node") {
  DialogueService svc(registry(), binding(), faqs(), {});
  const auto created = svc.create_session("car_starter", "my car will not start");
  const std::string id = created["session_id"];
  CHECK(created["node"] == "n_root");
  CHECK(created["reply"] == "does the engine crank when you turn the key?");
  CHECK(created["phase"] == "active");
  CHECK(created["turn"] == 1);

  auto r = svc.post_message(id, "no");
  CHECK(r["node"] == "n_open");
  CHECK(r["outcome"] == "transitioned");
  r = svc.post_message(id, "What does an open circuit mean?");
  CHECK(r["outcome"] == "faq_answered");
  CHECK(r["node"] == "n_open");
  CHECK(r["reply"].get<std::string>().rfind("The current path is broken.", 0) == 0);
  r = svc.post_message(id, "yes");
  r = svc.post_message(id, "yes");
  CHECK(r["outcome"] == "reached_terminal");
  CHECK(r["phase"] == "terminal");
  CHECK(r["path"] == json{"n_root", "n_open", "n_fuse", "n_replace"});

  const auto s = svc.get_session(id);
  CHECK(s["turn"] == 5);
  CHECK(s["history"].size() == 10);
  CHECK(s["history"][0]["role"] == "user");
  CHECK(status_of([&] { svc.post_message(id, "again"); }) == 409);
}

TEST_CASE("service error statuses") {
  FakeClock clock;
  ServiceConfig cfg;
  cfg.expiry = std::chrono::seconds(60);
  DialogueService svc(registry(), binding(), faqs(), cfg, clock.fn());
  CHECK(status_of([&] { svc.create_session("nope", "hi"); }) == 404);
  CHECK(status_of([&] { svc.create_session("car_starter", "   "); }) == 400);
  CHECK(status_of([&] { svc.post_message("0123456789abcdef0123456789abcdef", "hi"); }) == 404);
  CHECK(status_of([&] { svc.flowchart_view("nope"); }) == 404);

  const std::string id = svc.create_session("car_starter", "hello")["session_id"];
  CHECK(status_of([&] { svc.post_message(id, ""); }) == 400);
  clock.advance(30);
  svc.post_message(id, "hmm");
  clock.advance(59);
  CHECK(status_of([&] { svc.get_session(id); }) == 0);
  clock.advance(2);
  CHECK(status_of([&] { svc.post_message(id, "no"); }) == 410);
  CHECK(status_of([&] { svc.get_session(id); }) == 410);
  CHECK(svc.session_count() == 0);
}

TEST_CASE("sweep drops idle sessions") {
  FakeClock clock;
  ServiceConfig cfg;
  cfg.expiry = std::chrono::seconds(10);
  DialogueService svc(registry(), binding(), faqs(), cfg, clock.fn());
  const std::string a = svc.create_session("car_starter", "a")["session_id"];
  clock.advance(8);
  const std::string b = svc.create_session("car_starter", "b")["session_id"];
  clock.advance(5);
  CHECK(svc.sweep() == 1);
  CHECK(svc.session_count() == 1);
  CHECK(status_of([&] { svc.get_session(a); }) == 410);
  CHECK(status_of([&] { svc.get_session(b); }) == 0);
}

TEST_CASE("gateway failures map to 503 and leave the session usable") {
  auto flaky = std::make_shared<Flaky>();
  DialogueService svc(registry(), flaky, faqs(), {});
  const std::string id = svc.create_session("car_starter", "hello")["session_id"];
  flaky->down = true;
  CHECK(status_of([&] { svc.post_message(id, "no"); }) == 503);
  CHECK(status_of([&] { svc.create_session("car_starter", "hello"); }) == 503);
  flaky->down = false;
  CHECK(svc.post_message(id, "no")["node"] == "n_open");
  CHECK(svc.get_session(id)["turn"] == 2);
}

TEST_CASE("flowchart listing and graph view") {
  DialogueService svc(registry(), binding(), faqs(), {});
  const auto list = svc.list_flowcharts();
  CHECK(list.size() == 3);
  const auto view = svc.flowchart_view("car_starter");
  CHECK(view["root"] == "n_root");
  CHECK(view["nodes"].size() == 8);
  CHECK(view["edges"].size() == 7);
  CHECK(view["edges"][0] == json{{"src", "n_root"}, {"dst", "n_fuel"}, {"cond", "yes"}});
  CHECK(view["nodes"][0]["kind"] == "decision");
}

TEST_CASE("transcripts are persisted per session") {
  ServiceConfig cfg;
  cfg.transcript_dir = testsupport::scratch_dir("service_logs");
  DialogueService svc(registry(), binding(), faqs(), cfg);
  const std::string id = svc.create_session("car_starter", "hi")["session_id"];
  svc.post_message(id, "yes");
  const auto log = harness::TranscriptLog::read(*cfg.transcript_dir / (id + ".jsonl"));
  CHECK(log.entries().size() == 4);
  REQUIRE(log.footer());
  CHECK(log.footer()->phase == "terminal");
}

TEST_CASE("concurrent posts to one session are serialized") {
  DialogueService svc(registry(), binding(), faqs(), {});
  const std::string id = svc.create_session("car_starter", "hello")["session_id"];
  std::vector<std::thread> threads;
  std::atomic<int> ok{0};
  for (int i = 0; i < 8; ++i) {
    threads.emplace_back([&] {
      svc.post_message(id, "thinking");
      ++ok;
    });
  }
  for (auto& t : threads) t.join();
  CHECK(ok == 8);
  const auto s = svc.get_session(id);
  CHECK(s["turn"] == 9);
  CHECK(s["history"].size() == 18);
  CHECK(s["node"] == "n_root");
}

TEST_CASE("config from JSON and environment") {
  const auto cfg = ServiceConfig::from_json(
      json{{"flowcharts", "charts"}, {"port", 9000}, {"expiry_s", 5}, {"turn_budget", 12}}, "/srv");
  CHECK(cfg.flowchart_dir == std::filesystem::path("/srv/charts"));
  CHECK(cfg.port == 9000);
  CHECK(cfg.expiry == std::chrono::seconds(5));
  CHECK(cfg.agent.turn_budget == 12);

  ServiceConfig env;
  ::setenv("FLOWDIALOG_PORT", "9123", 1);
  ::setenv("FLOWDIALOG_FLOWCHARTS", testsupport::fixture_path("flowcharts").c_str(), 1);
  ::setenv("FLOWDIALOG_BINDING", R"({"kind":"scripted","echo":true})", 1);
  env.apply_env();
  ::unsetenv("FLOWDIALOG_PORT");
  ::unsetenv("FLOWDIALOG_FLOWCHARTS");
  ::unsetenv("FLOWDIALOG_BINDING");
  CHECK(env.port == 9123);
  auto svc = DialogueService::from_config(env);
  CHECK(svc->list_flowcharts().size() == 3);
  CHECK_THROWS_AS(DialogueService::from_config(ServiceConfig{}), SchemaError);
}

TEST_CASE("HTTP endpoints") {
  auto flaky = std::make_shared<Flaky>();
  DialogueService svc(registry(), flaky, faqs(), {});
  LiveServer server(svc);
  auto cli = server.client();

  auto res = cli.Get("/flowcharts");
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(json::parse(res->body).size() == 3);

  res = cli.Get("/flowcharts/car_starter/graph");
  REQUIRE(res);
  CHECK(json::parse(res->body)["nodes"].size() == 8);
  res = cli.Get("/flowcharts/ghost/graph");
  CHECK(res->status == 404);
  CHECK(json::parse(res->body)["error"]["code"] == "unknown_flowchart");

  res = cli.Post("/sessions", R"({"flowchart_id":"car_starter","message":"it will not start"})",
                 "application/json");
  REQUIRE(res);
  CHECK(res->status == 201);
  const auto created = json::parse(res->body);
  const std::string id = created["session_id"];
  CHECK(created["node"] == "n_root");

  res = cli.Post("/sessions/" + id + "/messages", R"({"message":"no"})", "application/json");
  CHECK(res->status == 200);
  CHECK(json::parse(res->body)["node"] == "n_open");

  res = cli.Post("/sessions/" + id + "/messages", "not json", "application/json");
  CHECK(res->status == 400);
  res = cli.Post("/sessions/" + id + "/messages", R"({"text":"no"})", "application/json");
  CHECK(res->status == 400);
  res = cli.Post("/sessions", R"({"flowchart_id":"car_starter","message":""})", "application/json");
  CHECK(res->status == 400);
  res = cli.Post("/sessions/abcdef/messages", R"({"message":"no"})", "application/json");
  CHECK(res->status == 404);

  flaky->down = true;
  res = cli.Post("/sessions/" + id + "/messages", R"({"message":"yes"})", "application/json");
  CHECK(res->status == 503);
  CHECK(json::parse(res->body)["error"]["retryable"] == true);
  flaky->down = false;

  res = cli.Post("/sessions/" + id + "/messages", R"({"message":"yes"})", "application/json");
  res = cli.Post("/sessions/" + id + "/messages", R"({"message":"yes"})", "application/json");
  CHECK(json::parse(res->body)["phase"] == "terminal");
  res = cli.Post("/sessions/" + id + "/messages", R"({"message":"yes"})", "application/json");
  CHECK(res->status == 409);
  CHECK(json::parse(res->body)["error"]["retryable"] == false);

  res = cli.Get("/sessions/" + id);
  CHECK(res->status == 200);
  CHECK(json::parse(res->body)["path"] == json{"n_root", "n_open", "n_fuse", "n_replace"});
}

TEST_CASE("HTTP sessions run concurrently") {
  DialogueService svc(registry(), binding(), faqs(), {});
  LiveServer server(svc);
  std::vector<std::thread> threads;
  std::atomic<int> finished{0};
  for (int i = 0; i < 6; ++i) {
    threads.emplace_back([&] {
      auto cli = server.client();
      auto res = cli.Post("/sessions", R"({"flowchart_id":"car_starter","message":"dead car"})",
                          "application/json");
      if (!res || res->status != 201) return;
      const std::string id = json::parse(res->body)["session_id"];
      for (const char* m : {"no", "no", "done"}) {
        res = cli.Post("/sessions/" + id + "/messages", json{{"message", m}}.dump(), "application/json");
        if (!res || res->status != 200) return;
      }
      if (json::parse(res->body)["node"] == "n_retry") ++finished;
    });
  }
  for (auto& t : threads) t.join();
  CHECK(finished == 6);
  CHECK(svc.session_count() == 6);
}
