#include <doctest.h>

#include "fixtures.hpp"
#include "flowdialog/simulator.hpp"

using namespace flowdialog;
using namespace flowdialog::simulator;

TEST_CASE("profile for a root-initial path") {
  auto fc = testsupport::car_flowchart();
  const auto p = build_profile(*fc, {"n_root", "n_open", "n_battery", "n_retry"});
  CHECK(p.background.empty());
  REQUIRE(p.goal.size() == 4);
  CHECK(p.goal[0].condition == "no");
  CHECK(p.goal[2].attribute == "recharge the battery for two hours");
  CHECK(p.goal[2].condition == "done");
  CHECK(p.goal[3].condition.empty());
}

TEST_CASE("profile for a middle-initial path carries the lead-in as background") {
  auto fc = testsupport::car_flowchart();
  const auto p = build_profile(*fc, {"n_fuse", "n_wiring"}, "User: it is dead\nAgent: ...");
  REQUIRE(p.background.size() == 2);
  CHECK(p.background[0].node == "n_root");
  CHECK(p.background[0].condition == "no");
  CHECK(p.background[1].node == "n_open");
  CHECK(p.background[1].condition == "yes");
  CHECK(p.reference_dialogue);
}

TEST_CASE("profile rejects invalid ground truth") {
  auto fc = testsupport::car_flowchart();
  CHECK_THROWS_AS(build_profile(*fc, {}), InvalidPathError);
  CHECK_THROWS_AS(build_profile(*fc, {"n_root", "n_moon"}), InvalidPathError);
  CHECK_THROWS_AS(build_profile(*fc, {"n_root", "n_fuse"}), InvalidPathError);
}

TEST_CASE("scripted simulator answers the asked step") {
  auto fc = testsupport::car_flowchart();
  ScriptedSimulator sim(build_profile(*fc, {"n_open", "n_fuse", "n_replace"}),
                        {{3, "What does an open circuit mean?"}});
  CHECK(sim.first_utterance() == "no. yes");
  // The agent may still ask about a background step.
  CHECK(sim.next_user_utterance("Does the engine crank when you turn the key?", {}, 2) == "no");
  CHECK(sim.next_user_utterance("anything", {}, 3) == "What does an open circuit mean?");
  CHECK(sim.next_user_utterance("Is the fuse wire blown?", {}, 4) == "yes");
  CHECK(sim.next_user_utterance("Please replace the fuse with one of the same rating.", {}, 5) ==
        std::nullopt);
  CHECK_THROWS_AS(sim.next_user_utterance("check the fuel supply and the fuel pump relay", {}, 6),
                  OffPathError);
}

TEST_CASE("scripted simulator prefers the longest matching attribute") {
  auto fc = std::make_shared<const Flowchart>(Flowchart::build(
      {"nest",
       "a",
       {{"a", "fuse", {}}, {"b", "fuse wire blown?", {}}, {"c", "done", {}}},
       {{"a", "b", "ok"}, {"b", "c", "yes"}}}));
  ScriptedSimulator sim(build_profile(*fc, {"a", "b", "c"}));
  CHECK(sim.next_user_utterance("is the fuse wire blown?", {}, 2) == "yes");
}

TEST_CASE("scripted simulator answers revisits on cyclic paths in order") {
  auto fc = testsupport::load_fixture("flowcharts/router_reset.puml");
  const NodePath gt{"n1", "n2", "n3", "n2", "n3", "n4", "n5", "n6"};
  ScriptedSimulator sim(build_profile(*fc, gt));
  const auto ask = [&](const NodeId& n, int turn) {
    return sim.next_user_utterance(fc->node_attr(n), {}, turn);
  };
  const auto first = ask("n3", 2);
  const auto second = ask("n3", 3);
  REQUIRE(first);
  REQUIRE(second);
  CHECK(*first == "yes");
  CHECK(*second == "no");
}

TEST_CASE("FAQ injections must start at turn 2") {
  auto fc = testsupport::car_flowchart();
  CHECK_THROWS_AS(ScriptedSimulator(build_profile(*fc, {"n_root", "n_fuel"}), {{1, "q?"}}),
                  PreconditionError);
}

TEST_CASE("llm simulator prompts with the profile and stops at the end marker") {
  auto fc = testsupport::car_flowchart();
  auto b = std::make_shared<llm::ScriptedBinding>(std::map<std::string, std::string>{
      {"task=simulate|turn=1", "My car is dead, it does not even crank."},
      {"task=simulate|turn=2", " It is blown. "},
      {"task=simulate|turn=3", "Thanks! [END]"}});
  LlmSimulator sim(build_profile(*fc, {"n_fuse", "n_replace"}), b, {{4, "Is it safe?"}}, 11);
  const std::string sys = sim.system_prompt();
  CHECK(sys.find("does the engine crank when you turn the key? -> no") != std::string::npos);
  CHECK(sys.find("fuse wire blown? -> yes") != std::string::npos);
  CHECK(sim.first_utterance() == "My car is dead, it does not even crank.");
  CHECK(sim.next_user_utterance("Is the fuse blown?", {}, 2) == "It is blown.");
  CHECK(sim.next_user_utterance("Replace it.", {}, 3) == std::nullopt);
  CHECK(sim.next_user_utterance("x", {}, 4) == "Is it safe?");

  auto empty = std::make_shared<llm::ScriptedBinding>(std::map<std::string, std::string>{}, " ");
  LlmSimulator quiet(build_profile(*fc, {"n_root", "n_fuel"}), empty);
  CHECK_THROWS_AS(quiet.first_utterance(), MalformedResponseError);
}

TEST_CASE("first_utterance dispatches on simulator kind") {
  auto fc = testsupport::car_flowchart();
  const auto p = build_profile(*fc, {"n_root", "n_fuel"});
  CHECK(first_utterance(p, SimulatorKind::scripted, nullptr) == "yes");
  CHECK_THROWS_AS(first_utterance(p, SimulatorKind::llm, nullptr), PreconditionError);
}
