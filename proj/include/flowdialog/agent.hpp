#pragma once

#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "flowdialog/flowgraph.hpp"
#include "flowdialog/knowledge.hpp"
#include "flowdialog/llm.hpp"

namespace flowdialog::agent {

enum class Phase { active, terminal, budget_exceeded };
enum class OutcomeKind { transitioned, stayed, faq_answered, reached_terminal, budget_exceeded };

std::string_view to_string(Phase phase);
std::string_view to_string(OutcomeKind kind);
std::optional<OutcomeKind> parse_outcome_kind(std::string_view s);
std::optional<Phase> parse_phase(std::string_view s);

inline constexpr std::string_view kDomainQuestion = "DOMAIN_QUESTION";
inline constexpr std::string_view kUnclear = "UNCLEAR";

struct AgentConfig {
  std::optional<int> max_self_loop_hops;  // defaults to the flowchart depth
  int turn_budget = 1000;                 // T_tau, in user turns
  double faq_threshold = 0.2;

  void check() const;
};

struct AgentState {
  std::string session_id;
  std::shared_ptr<const Flowchart> flowchart;
  NodeId current;
  NodePath predicted;              // every visited node, including the opening walk
  std::size_t initial_index = 0;   // position of the node grounded on turn 1
  std::vector<int> transition_lengths;  // turns per completed transition
  int pending_turns = 0;           // turns spent at `current` since arriving
  int turn = 0;                    // user turns consumed
  int faq_turns = 0;
  Phase phase = Phase::active;
  llm::Messages history;           // alternating user / assistant

  /// Predicted sequence from the initially grounded node onward.
  NodePath grounded_path() const;
  /// Completed transition lengths plus the in-progress count when non-zero.
  std::vector<int> stay_counters() const;
};

struct TurnOutcome {
  OutcomeKind kind;
  std::string utterance;
  NodeId node;                 // grounded node after the turn
  int hops = 0;                // nodes advanced this turn
  NodePath walk;               // nodes entered this turn, in order
  std::optional<double> faq_score;
};

/// Grounds the opening utterance by walking from the root while the model
/// confirms that the user already answered or performed each node.
std::pair<AgentState, TurnOutcome> start(std::shared_ptr<const Flowchart> fc,
                                         std::string_view first_utterance, const AgentConfig& cfg,
                                         const llm::ModelBinding& binding,
                                         std::string session_id = {});

/// One user turn: follow an outgoing edge, answer a domain question, or stay.
std::pair<AgentState, TurnOutcome> step(AgentState state, std::string_view user_utterance,
                                        const AgentConfig& cfg, const llm::ModelBinding& binding,
                                        const knowledge::FaqStore* faq);

/// Turns a node attribute into a reply. A scripted echo binding returns the
/// attribute unchanged.
std::string rephrase(std::string_view node_attr, const llm::Messages& history,
                     const llm::ModelBinding& binding, std::string_view node_id = {},
                     bool final_step = false);

// Graph-serialization baseline: the whole edge list goes into the prompt and
// the model names the current node itself, without topology checks.

inline constexpr std::string_view kInvalidNode = "<INVALID>";

struct BaselineTurn {
  NodeId claimed;  // kInvalidNode when the reply names no known node
  std::string utterance;
};

BaselineTurn serialized_baseline_turn(const Flowchart& fc, const llm::Messages& history,
                                      const llm::ModelBinding& binding, int turn = 1);

BaselineTurn parse_baseline_reply(const Flowchart& fc, std::string_view reply);

/// A dialogue policy as seen by the harness and the service.
class Session {
 public:
  virtual ~Session() = default;
  virtual TurnOutcome open(std::string_view first_utterance) = 0;
  virtual TurnOutcome respond(std::string_view utterance) = 0;
  virtual Phase phase() const = 0;
  virtual const NodePath& predicted() const = 0;
  virtual int turn() const = 0;
};

class FlowAgentSession final : public Session {
 public:
  FlowAgentSession(std::shared_ptr<const Flowchart> fc, AgentConfig cfg, llm::BindingPtr binding,
                   std::shared_ptr<const knowledge::FaqStore> faq, std::string session_id = {});

  TurnOutcome open(std::string_view first_utterance) override;
  TurnOutcome respond(std::string_view utterance) override;
  Phase phase() const override { return state_.phase; }
  const NodePath& predicted() const override { return state_.predicted; }
  int turn() const override { return state_.turn; }
  const AgentState& state() const noexcept { return state_; }

 private:
  std::shared_ptr<const Flowchart> fc_;
  AgentConfig cfg_;
  llm::BindingPtr binding_;
  std::shared_ptr<const knowledge::FaqStore> faq_;
  AgentState state_;
};

class SerializedBaselineSession final : public Session {
 public:
  SerializedBaselineSession(std::shared_ptr<const Flowchart> fc, int turn_budget,
                            llm::BindingPtr binding);

  TurnOutcome open(std::string_view first_utterance) override;
  TurnOutcome respond(std::string_view utterance) override;
  Phase phase() const override { return phase_; }
  const NodePath& predicted() const override { return predicted_; }
  int turn() const override { return turn_; }

 private:
  TurnOutcome take_turn(std::string_view utterance);

  std::shared_ptr<const Flowchart> fc_;
  int budget_;
  llm::BindingPtr binding_;
  llm::Messages history_;
  NodePath predicted_;
  int turn_ = 0;
  Phase phase_ = Phase::active;
};

}  // namespace flowdialog::agent
