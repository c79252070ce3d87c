#include <doctest.h>

#include <atomic>
#include <fstream>
#include <sstream>

#include "fixtures.hpp"
#include "flowdialog/harness.hpp"
#include "flowdialog/ingest.hpp"
#include "oracles.hpp"

using namespace flowdialog;
using namespace flowdialog::harness;
using nlohmann::json;

namespace {

json read_json(const std::filesystem::path& p) {
  std::ifstream in(p);
  return json::parse(in);
}

RunConfig suite_config() {
  const auto path = testsupport::fixture_path("suite/run.json");
  return RunConfig::from_json(read_json(path), path.parent_path());
}

Dataset suite_dataset() {
  const auto cfg = suite_config();
  Dataset d{load_registry(cfg.flowchart_dir), load_samples(cfg.dataset)};
  d.check();
  return d;
}

EpisodeContext suite_context() {
  const auto cfg = suite_config();
  EpisodeContext ctx;
  ctx.agent_binding = llm::make_binding(cfg.agent_binding);
  ctx.faqs = std::make_shared<const knowledge::FaqStore>(
      knowledge::ingest_faqs(std::string_view(ingest::read_text_file(*cfg.faqs))));
  ctx.seed = cfg.seed;
  return ctx;
}

struct Expected {
  const char* id;
  NodePath predicted;
  int turns;
  int budget;
  std::vector<int> transitions;
  int faq_turns;
};

// Walked by hand: the closed-loop agent grounds every opening at the root,
// so middle-initial samples also traverse their lead-in.
const std::vector<Expected>& expected_records() {
  static const std::vector<Expected> e = {
      {"car-01", {"n_root", "n_fuel"}, 2, 4, {1}, 0},
      {"car-02", {"n_root", "n_open", "n_fuse", "n_replace"}, 4, 8, {1, 1, 1}, 0},
      {"car-03", {"n_root", "n_open", "n_fuse", "n_wiring"}, 4, 8, {1, 1, 1}, 0},
      {"car-04", {"n_root", "n_open", "n_battery", "n_retry"}, 4, 8, {1, 1, 1}, 0},
      {"car-05", {"n_root", "n_open", "n_fuse", "n_replace"}, 4, 6, {1, 1, 1}, 0},
      {"car-06", {"n_root", "n_open", "n_fuse", "n_wiring"}, 4, 4, {1, 1, 1}, 0},
      {"car-07", {"n_root", "n_open", "n_battery", "n_retry"}, 4, 4, {1, 1, 1}, 0},
      {"printer-08", {"p1", "p2", "p3", "p4", "p5"}, 5, 10, {1, 1, 1, 1}, 0},
      {"printer-09", {"p1", "p2", "p3", "p4", "p6", "p7"}, 6, 12, {1, 1, 1, 1, 1}, 0},
      {"printer-10", {"p1", "p2", "p8", "p10"}, 4, 8, {1, 1, 1}, 0},
      {"printer-11", {"p1", "p2", "p8", "p9", "p10"}, 5, 10, {1, 1, 1, 1}, 0},
      {"printer-12", {"p1", "p11", "p10"}, 3, 6, {1, 1}, 0},
      {"printer-13", {"p1", "p11", "p12"}, 3, 6, {1, 1}, 0},
      {"printer-14", {"p1", "p2", "p8", "p9", "p10"}, 6, 8, {1, 1, 2, 1}, 1},
      {"printer-15", {"p1", "p2", "p3", "p4", "p6", "p7"}, 6, 8, {1, 1, 1, 1, 1}, 0},
      {"router-16", {"n1", "n2", "n3", "n2", "n3", "n4", "n7", "n8"}, 9, 18, {1, 1, 2, 1, 1, 1, 1}, 1},
      {"car-17", {"n_root", "n_open", "n_fuse", "n_replace"}, 5, 10, {1, 2, 1}, 1},
      {"printer-18", {"p1", "p2", "p3", "p4", "p6", "p7"}, 8, 16, {1, 3, 1, 1, 1}, 2},
      {"car-19", {"n_root", "n_open"}, 3, 2, {1}, 0},
      {"car-20", {"n_root", "n_open", "n_fuse", "n_replace"}, 5, 8, {1, 2, 1}, 1},
  };
  return e;
}

}  // namespace

TEST_CASE("sample parsing") {
  const auto s = parse_samples(json::parse(R"([
    {"flowchart_id": "f", "gt_path": ["a", "b"]},
    {"id": "x", "flowchart_id": "f", "gt_path": ["a"], "gt_turns": 3,
     "faq_injections": [{"turn": 2, "question": "q?"}], "gt_user_turns": ["hi"]}
  ])"));
  REQUIRE(s.size() == 2);
  CHECK(s[0].id == "f#0");
  CHECK(s[0].ground_truth_turns() == 2);
  CHECK(s[1].ground_truth_turns() == 3);
  CHECK(s[1].gt_user_turns == std::vector<std::string>{"hi"});
  CHECK(parse_samples(json{{"samples", json::array()}}).empty());
  CHECK_THROWS_AS(parse_samples(json{{"items", 1}}), SchemaError);
  CHECK_THROWS_AS(parse_samples(json::parse(R"([{"flowchart_id":"f","gt_path":[]}])")), SchemaError);
  CHECK_THROWS_AS(parse_samples(json::parse(R"([{"id":"a","flowchart_id":"f","gt_path":["a"]},
                                                {"id":"a","flowchart_id":"f","gt_path":["b"]}])")),
                  SchemaError);
  CHECK_THROWS_AS(
      parse_samples(json::parse(
          R"([{"flowchart_id":"f","gt_path":["a"],"faq_injections":[{"turn":1,"question":"q"}]}])")),
      SchemaError);
}

TEST_CASE("budget rule") {
  Sample s;
  s.gt_path = {"a", "b", "c"};
  CHECK(BudgetRule{}.budget_for(s) == 6);
  CHECK(BudgetRule{std::nullopt, 1.5}.budget_for(s) == 5);
  CHECK(BudgetRule{4, 2.0}.budget_for(s) == 4);
  s.faq_injections = {{2, "q"}};
  CHECK(BudgetRule{}.budget_for(s) == 8);
}

TEST_CASE("dataset validation names the offending sample") {
  auto d = suite_dataset();
  CHECK(d.flowcharts.size() == 3);
  CHECK(d.samples.size() == 20);
  const auto split = split_counts(d);
  CHECK(split.root_init == 14);
  CHECK(split.middle_init == 6);

  d.samples[3].gt_path = {"n_root", "n_fuse"};
  try {
    d.check();
    FAIL("expected SchemaError");
  } catch (const SchemaError& e) {
    CHECK(std::string(e.what()).find("car-04") != std::string::npos);
  }
  d.samples[3].flowchart_id = "nope";
  CHECK_THROWS_AS(d.check(), SchemaError);
}

TEST_CASE("run config resolves paths and rejects bad values") {
  const auto cfg = suite_config();
  CHECK(cfg.dataset.filename() == "samples.json");
  CHECK(cfg.dataset.is_absolute());
  CHECK(cfg.parallel == 4);
  CHECK(cfg.seed == 7);
  const auto again = RunConfig::from_json(cfg.to_json());
  CHECK(again.dataset == cfg.dataset);
  CHECK(again.agent_binding == cfg.agent_binding);
  CHECK(again.budget.multiplier == cfg.budget.multiplier);
  json bad = cfg.to_json();
  bad["parallel"] = 0;
  CHECK_THROWS_AS(RunConfig::from_json(bad), SchemaError);
  bad = cfg.to_json();
  bad["agent"] = "oracle";
  CHECK_THROWS_AS(RunConfig::from_json(bad), SchemaError);
  CHECK_THROWS_AS(RunConfig::from_json(json::object()), SchemaError);
}

TEST_CASE("suite records match the hand-walked expectations") {
  const auto d = suite_dataset();
  const auto result = run_suite(d, suite_context(), 4);
  REQUIRE(result.episodes.size() == 20);
  const auto& expected = expected_records();
  for (std::size_t i = 0; i < expected.size(); ++i) {
    const auto& e = expected[i];
    const auto& ep = result.episodes[i];
    INFO(e.id);
    CHECK(ep.log.header().sample_id == e.id);
    REQUIRE(ep.record);
    CHECK(ep.record->predicted == e.predicted);
    CHECK(ep.record->turns == e.turns);
    CHECK(ep.record->budget == e.budget);
    CHECK(ep.record->transitions == e.transitions);
    CHECK(ep.record->faq_turns == e.faq_turns);
  }
  CHECK(result.episodes[18].log.footer()->phase == "budget_exceeded");

  // Metrics recomputed from the expected table with exact fractions.
  testsupport::Fraction nsr_sum{0, 1};
  for (const auto& e : expected) {
    std::int64_t red = 0, tot = 0;
    for (int l : e.transitions) {
      red += l - 1;
      tot += l;
    }
    nsr_sum = testsupport::add(nsr_sum, {red, tot});
  }
  const auto nsr = testsupport::divide(nsr_sum, 20);
  CHECK(nsr.num == 311);
  CHECK(nsr.den == 5600);

  const auto& m = result.metrics;
  CHECK(m.inga.overall == doctest::Approx(14.0 / 20));
  CHECK(m.inga.root_init == doctest::Approx(1.0));
  CHECK(m.inga.middle_init == doctest::Approx(0.0));
  CHECK(m.tnga == doctest::Approx(19.0 / 20));
  CHECK(m.pca == doctest::Approx(19.0 / 20));
  CHECK(m.tr == doctest::Approx(1.0 / 20));
  CHECK(*m.nsr.value == doctest::Approx(nsr.value()).epsilon(1e-12));
  CHECK(m.coverage == evaluation::CoverageHistogram{13, 6, 1, 0, 0});

  const auto& r = result.report;
  CHECK(r["completed"] == 20);
  CHECK(r["failed"].empty());
  CHECK(r["faq_turns"] == 6);
  CHECK(r["faq_local_accuracy"]["exchanges"] == 5);
  CHECK(r["faq_local_accuracy"]["value"] == 1.0);
  CHECK(r["splits"]["middle_init"] == 6);
  CHECK(r["user_turn_diversity"]["samples"] == 20);
}

TEST_CASE("reports are byte-identical across runs and worker counts") {
  const auto d = suite_dataset();
  const auto ctx = suite_context();
  const auto a = render_report(run_suite(d, ctx, 1).report);
  const auto b = render_report(run_suite(d, ctx, 4).report);
  const auto c = render_report(run_suite(d, ctx, 3).report);
  CHECK(a == b);
  CHECK(a == c);
}

TEST_CASE("logs replay to the live records") {
  const auto out = testsupport::scratch_dir("harness_out");
  auto cfg = suite_config();
  cfg.out = out;
  const auto result = run_suite(cfg);
  std::vector<std::filesystem::path> logs;
  for (const auto& e : std::filesystem::directory_iterator(out / "logs")) logs.push_back(e.path());
  std::sort(logs.begin(), logs.end());
  REQUIRE(logs.size() == 20);
  CHECK(logs[0].filename() == "0000_car-01.jsonl");
  for (std::size_t i = 0; i < logs.size(); ++i) {
    const auto r = replay(logs[i]);
    CHECK(r.predicted == result.episodes[i].record->predicted);
    CHECK(r.transitions == result.episodes[i].record->transitions);
    CHECK(r.turns == result.episodes[i].record->turns);
  }
  std::ifstream in(out / "report.json");
  std::stringstream ss;
  ss << in.rdbuf();
  CHECK(ss.str() == render_report(result.report));
  CHECK(std::filesystem::exists(out / "report.txt"));
}

TEST_CASE("empty dataset is rejected") {
  Dataset d;
  d.flowcharts = suite_dataset().flowcharts;
  CHECK_THROWS_AS(run_suite(d, suite_context(), 1), EmptyInputError);
}

TEST_CASE("a budget of one turn times out after the opening") {
  auto d = suite_dataset();
  d.samples = {d.samples[1]};
  auto ctx = suite_context();
  ctx.budget.fixed = 1;
  const auto result = run_suite(d, ctx, 1);
  const auto& rec = *result.episodes[0].record;
  CHECK(rec.turns == 2);
  CHECK(rec.predicted == NodePath{"n_root"});
  CHECK(rec.transitions.empty());
  CHECK(result.metrics.tr == 1.0);
  CHECK_FALSE(result.metrics.nsr.value);
}

TEST_CASE("an agent leaving the ground-truth path fails the episode") {
  auto d = suite_dataset();
  d.samples = {d.samples[0], d.samples[3]};  // car-01 and car-04
  auto ctx = suite_context();
  // At n_open the agent always follows "yes", but car-04 needs "no".
  ctx.agent_binding = llm::ScriptedBinding::echo(
      {{"task=ground", "NONE"}, {"task=completed", "NONE"}, {"task=intent|node=n_open", "yes"}});
  const auto result = run_suite(d, ctx, 2);
  CHECK(result.episodes[0].record);
  REQUIRE_FALSE(result.episodes[1].record);
  CHECK(result.episodes[1].failure == std::string(kReasonOffPath));
  CHECK(result.episodes[1].log.footer()->status == "failed");
  CHECK(result.report["completed"] == 1);
  CHECK(result.report["failed"][0]["sample_id"] == "car-04");
  CHECK(result.report["failed"][0]["reason"] == "simulator_off_path");
  CHECK(result.metrics.n == 1);
}

namespace {

// Fails every call, or only the n-th call.
class FailingBinding final : public llm::ModelBinding {
 public:
  FailingBinding(llm::BindingPtr inner, int fail_on) : inner_(std::move(inner)), fail_on_(fail_on) {}
  std::string complete(const llm::Messages& m, const llm::DecodingParams& p) const override {
    const int n = ++calls_;
    if (fail_on_ == 0 || n == fail_on_) throw TransportError("unreachable");
    return inner_->complete(m, p);
  }
  std::string_view kind() const noexcept override { return "failing"; }
  json describe() const override { return {{"kind", "failing"}}; }
  int calls() const { return calls_; }

 private:
  llm::BindingPtr inner_;
  int fail_on_;
  mutable std::atomic<int> calls_{0};
};

}  // namespace

TEST_CASE("gateway failures are recorded and transient ones retried per turn") {
  auto d = suite_dataset();
  d.samples = {d.samples[1]};
  auto ctx = suite_context();

  auto dead = std::make_shared<FailingBinding>(ctx.agent_binding, 0);
  ctx.agent_binding = dead;
  ctx.turn_attempts = 2;
  auto result = run_suite(d, ctx, 1);
  CHECK(result.episodes[0].failure == std::string(kReasonGateway));
  CHECK(dead->calls() == 2);
  CHECK(result.report["metrics"].is_null());

  // One transient failure in the middle of the episode is absorbed.
  auto flaky = std::make_shared<FailingBinding>(suite_context().agent_binding, 4);
  ctx.agent_binding = flaky;
  result = run_suite(d, ctx, 1);
  REQUIRE(result.episodes[0].record);
  CHECK(result.episodes[0].record->predicted == NodePath{"n_root", "n_open", "n_fuse", "n_replace"});
  CHECK(result.episodes[0].record->transitions == std::vector<int>{1, 1, 1});
}

TEST_CASE("serialized baseline runs through the same harness") {
  auto d = suite_dataset();
  d.samples = {d.samples[0]};
  auto ctx = suite_context();
  ctx.agent = AgentKind::serialized;
  ctx.agent_binding = std::make_shared<llm::ScriptedBinding>(std::map<std::string, std::string>{
      {"task=baseline|turn=1", "NODE: n_root\nREPLY: does the engine crank when you turn the key?"},
      {"task=baseline|turn=2", "NODE: n_fuel\nREPLY: check the fuel supply and the fuel pump relay"}});
  const auto result = run_suite(d, ctx, 1);
  REQUIRE(result.episodes[0].record);
  CHECK(result.episodes[0].record->predicted == NodePath{"n_root", "n_fuel"});
  CHECK(result.report["agent"] == "serialized");
}
