#include "flowdialog/agent.hpp"

#include "flowdialog/text.hpp"

namespace flowdialog::agent {

using llm::ChatMessage;
using llm::Messages;
using llm::Role;

std::string_view to_string(Phase phase) {
  switch (phase) {
    case Phase::active: return "active";
    case Phase::terminal: return "terminal";
    case Phase::budget_exceeded: return "budget_exceeded";
  }
  return "active";
}

std::string_view to_string(OutcomeKind kind) {
  switch (kind) {
    case OutcomeKind::transitioned: return "transitioned";
    case OutcomeKind::stayed: return "stayed";
    case OutcomeKind::faq_answered: return "faq_answered";
    case OutcomeKind::reached_terminal: return "reached_terminal";
    case OutcomeKind::budget_exceeded: return "budget_exceeded";
  }
  return "stayed";
}

std::optional<OutcomeKind> parse_outcome_kind(std::string_view s) {
  for (auto k : {OutcomeKind::transitioned, OutcomeKind::stayed, OutcomeKind::faq_answered,
                 OutcomeKind::reached_terminal, OutcomeKind::budget_exceeded}) {
    if (to_string(k) == s) return k;
  }
  return std::nullopt;
}

std::optional<Phase> parse_phase(std::string_view s) {
  for (auto p : {Phase::active, Phase::terminal, Phase::budget_exceeded}) {
    if (to_string(p) == s) return p;
  }
  return std::nullopt;
}

void AgentConfig::check() const {
  if (max_self_loop_hops && *max_self_loop_hops < 0) {
    throw PreconditionError("max self-loop hops must be >= 0");
  }
  if (turn_budget < 1) throw PreconditionError("turn budget must be >= 1");
}

NodePath AgentState::grounded_path() const {
  return NodePath(predicted.begin() + static_cast<std::ptrdiff_t>(initial_index), predicted.end());
}

std::vector<int> AgentState::stay_counters() const {
  auto out = transition_lengths;
  if (pending_turns > 0) out.push_back(pending_turns);
  return out;
}

namespace {

constexpr const char* kAgentSystem =
    "You are a troubleshooting assistant that guides the user through a procedure one step at a "
    "time. Follow the instructions of each request exactly.";

std::string transcript_text(const Messages& history) {
  std::string out;
  for (const auto& m : history) {
    out += m.role == Role::user ? "User: " : "Assistant: ";
    out += m.content;
    out += "\n";
  }
  return out;
}

// Self-loop check for one node. Returns the condition to follow, if any.
std::optional<std::string> opening_match(const Flowchart& fc, const Node& node,
                                         std::string_view utterance,
                                         const llm::ModelBinding& binding) {
  const auto conds = fc.out_edge_attrs(node.id);
  if (conds.size() == 1) {
    std::string prompt = llm::key_tag({{"task", "completed"}, {"node", node.id}});
    prompt += "\nThe procedure step below is an action. Based only on the user's message, has "
              "the user already performed this action?\nAction: " +
              node.text + "\nUser message:\n" + llm::subject_block(utterance);
    const auto answer = llm::structured_choice(
        binding, {{Role::system, kAgentSystem}, {Role::user, prompt}}, {"yes", "no"});
    if (answer && *answer == "yes") return conds.front();
    return std::nullopt;
  }
  std::string prompt = llm::key_tag({{"task", "ground"}, {"node", node.id}});
  prompt += "\nThe procedure asks the question below. Decide whether the user's message already "
            "answers it, and if so which answer applies.\nQuestion: " +
            node.text + "\nUser message:\n" + llm::subject_block(utterance);
  return llm::structured_choice(binding, {{Role::system, kAgentSystem}, {Role::user, prompt}},
                                conds);
}

std::optional<std::string> classify_intent(const AgentState& state, std::string_view utterance,
                                           const std::vector<std::string>& conds,
                                           const llm::ModelBinding& binding) {
  const Node& node = state.flowchart->node(state.current);
  std::string prompt = llm::key_tag(
      {{"task", "intent"}, {"node", node.id}, {"turn", std::to_string(state.turn)}});
  prompt += "\nConversation so far:\n" + transcript_text(state.history);
  prompt += "\nThe current procedure step is: " + node.text + "\nPossible outcomes:";
  for (const auto& c : conds) prompt += "\n- " + c;
  prompt += "\nIf the user asks a domain knowledge question instead, answer " +
            std::string(kDomainQuestion) + ". If the message does not settle the step, answer " +
            std::string(kUnclear) + ".\nLatest user message:\n" +
            llm::subject_block(utterance);
  std::vector<std::string> labels = conds;
  labels.emplace_back(kDomainQuestion);
  labels.emplace_back(kUnclear);
  return llm::structured_choice(binding, {{Role::system, kAgentSystem}, {Role::user, prompt}},
                                labels);
}

void record_exchange(AgentState& state, std::string_view user, const std::string& reply) {
  state.history.push_back(ChatMessage{Role::user, std::string(user)});
  state.history.push_back(ChatMessage{Role::assistant, reply});
}

}  // namespace

std::string rephrase(std::string_view node_attr, const Messages& history,
                     const llm::ModelBinding& binding, std::string_view node_id, bool final_step) {
  if (text::trim(node_attr).empty()) throw PreconditionError("cannot rephrase an empty attribute");
  std::vector<std::pair<std::string, std::string>> key{{"task", "rephrase"}};
  if (!node_id.empty()) key.emplace_back("node", std::string(node_id));
  std::string prompt = llm::key_tag(key);
  if (!history.empty()) prompt += "\nConversation so far:\n" + transcript_text(history);
  prompt += final_step
                ? "\nTell the user the final solution below in one or two natural sentences.\n"
                : "\nRewrite the procedure step below as a natural, friendly message to the user. "
                  "If it is a question, ask it; if it is an action, explain how to do it.\n";
  prompt += llm::subject_block(node_attr);
  std::string out = text::trim(llm::complete(
      binding, {{Role::system, kAgentSystem}, {Role::user, prompt}}, llm::creative_params()));
  if (out.empty()) throw MalformedResponseError("empty rephrasing");
  return out;
}

std::pair<AgentState, TurnOutcome> start(std::shared_ptr<const Flowchart> fc,
                                         std::string_view first_utterance, const AgentConfig& cfg,
                                         const llm::ModelBinding& binding,
                                         std::string session_id) {
  cfg.check();
  if (!fc) throw PreconditionError("no flowchart");
  if (text::trim(first_utterance).empty()) throw PreconditionError("first utterance is empty");

  AgentState state;
  state.session_id = std::move(session_id);
  state.flowchart = fc;
  state.current = fc->root();
  state.predicted = {fc->root()};
  state.turn = 1;

  TurnOutcome outcome{OutcomeKind::stayed, {}, {}, 0, {fc->root()}, std::nullopt};
  const int max_hops = cfg.max_self_loop_hops.value_or(depth(*fc));
  while (outcome.hops < max_hops && !fc->terminal_check(state.current)) {
    const auto cond = opening_match(*fc, fc->node(state.current), first_utterance, binding);
    if (!cond) break;
    state.current = fc->next_hop(state.current, *cond);
    state.predicted.push_back(state.current);
    outcome.walk.push_back(state.current);
    ++outcome.hops;
  }
  state.initial_index = state.predicted.size() - 1;

  const bool terminal = fc->terminal_check(state.current);
  if (terminal) {
    state.phase = Phase::terminal;
    outcome.kind = OutcomeKind::reached_terminal;
  }
  Messages history{{Role::user, std::string(first_utterance)}};
  outcome.utterance =
      rephrase(fc->node_attr(state.current), history, binding, state.current, terminal);
  outcome.node = state.current;
  record_exchange(state, first_utterance, outcome.utterance);
  return {std::move(state), std::move(outcome)};
}

std::pair<AgentState, TurnOutcome> step(AgentState state, std::string_view user_utterance,
                                        const AgentConfig& cfg, const llm::ModelBinding& binding,
                                        const knowledge::FaqStore* faq) {
  cfg.check();
  if (state.phase != Phase::active) throw PreconditionError("session is not active");
  if (text::trim(user_utterance).empty()) throw PreconditionError("user utterance is empty");
  const Flowchart& fc = *state.flowchart;

  ++state.turn;
  TurnOutcome outcome{OutcomeKind::stayed, {}, state.current, 0, {}, std::nullopt};
  if (state.turn > cfg.turn_budget) {
    state.phase = Phase::budget_exceeded;
    outcome.kind = OutcomeKind::budget_exceeded;
    outcome.utterance =
        "We have reached the limit of this conversation without finishing the procedure.";
    record_exchange(state, user_utterance, outcome.utterance);
    return {std::move(state), std::move(outcome)};
  }

  const auto conds = fc.out_edge_attrs(state.current);
  const auto choice = classify_intent(state, user_utterance, conds, binding);
  Messages context = state.history;
  context.push_back({Role::user, std::string(user_utterance)});

  if (choice && *choice == kDomainQuestion) {
    ++state.pending_turns;
    ++state.faq_turns;
    outcome.kind = OutcomeKind::faq_answered;
    std::string answer = "I could not find an answer to that question.";
    if (faq && !faq->empty()) {
      const auto hits = faq->retrieve(user_utterance, 1);
      outcome.faq_score = hits.front().score;
      if (hits.front().score >= cfg.faq_threshold) answer = hits.front().entry->answer;
    }
    outcome.utterance =
        answer + "\n\n" + rephrase(fc.node_attr(state.current), context, binding, state.current);
  } else if (choice && *choice != kUnclear) {
    state.transition_lengths.push_back(state.pending_turns + 1);
    state.pending_turns = 0;
    state.current = fc.next_hop(state.current, *choice);
    state.predicted.push_back(state.current);
    outcome.node = state.current;
    outcome.hops = 1;
    outcome.walk = {state.current};
    const bool terminal = fc.terminal_check(state.current);
    if (terminal) state.phase = Phase::terminal;
    outcome.kind = terminal ? OutcomeKind::reached_terminal : OutcomeKind::transitioned;
    outcome.utterance =
        rephrase(fc.node_attr(state.current), context, binding, state.current, terminal);
  } else {
    ++state.pending_turns;
    outcome.utterance = rephrase(fc.node_attr(state.current), context, binding, state.current);
  }
  record_exchange(state, user_utterance, outcome.utterance);
  return {std::move(state), std::move(outcome)};
}

FlowAgentSession::FlowAgentSession(std::shared_ptr<const Flowchart> fc, AgentConfig cfg,
                                   llm::BindingPtr binding,
                                   std::shared_ptr<const knowledge::FaqStore> faq,
                                   std::string session_id)
    : fc_(std::move(fc)), cfg_(cfg), binding_(std::move(binding)), faq_(std::move(faq)) {
  cfg_.check();
  state_.session_id = std::move(session_id);
}

TurnOutcome FlowAgentSession::open(std::string_view first_utterance) {
  auto [state, outcome] = start(fc_, first_utterance, cfg_, *binding_, state_.session_id);
  state_ = std::move(state);
  return outcome;
}

TurnOutcome FlowAgentSession::respond(std::string_view utterance) {
  auto [state, outcome] = step(state_, utterance, cfg_, *binding_, faq_.get());
  state_ = std::move(state);
  return outcome;
}

BaselineTurn parse_baseline_reply(const Flowchart& fc, std::string_view reply) {
  BaselineTurn turn{std::string(kInvalidNode), text::trim(reply)};
  const std::string body(reply);
  std::size_t start = 0;
  bool reply_seen = false;
  std::string reply_text;
  while (start <= body.size()) {
    std::size_t nl = body.find('\n', start);
    if (nl == std::string::npos) nl = body.size();
    const std::string line = text::trim(body.substr(start, nl - start));
    if (reply_seen) {
      reply_text += "\n" + line;
    } else if (line.rfind("NODE:", 0) == 0) {
      std::string id = text::trim(line.substr(5));
      if (fc.contains(id)) turn.claimed = id;
    } else if (line.rfind("REPLY:", 0) == 0) {
      reply_seen = true;
      reply_text = line.substr(6);
    }
    start = nl + 1;
  }
  if (reply_seen && !text::trim(reply_text).empty()) turn.utterance = text::trim(reply_text);
  return turn;
}

BaselineTurn serialized_baseline_turn(const Flowchart& fc, const Messages& history,
                                      const llm::ModelBinding& binding, int turn) {
  if (history.empty() || history.back().role != Role::user) {
    throw PreconditionError("baseline turn needs a final user message");
  }
  // Built inline rather than through ingest to keep this module free of the
  // file-format layer; the layout matches the edge-list schema.
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& n : fc.nodes()) nodes.push_back({{"id", n.id}, {"text", n.text}});
  nlohmann::json edges = nlohmann::json::array();
  for (const auto& e : fc.edges()) {
    edges.push_back({{"src", e.source}, {"dst", e.target}, {"cond", e.condition}});
  }
  const nlohmann::json graph = {{"id", fc.id()}, {"root", fc.root()}, {"nodes", nodes},
                                {"edges", edges}};
  std::string system =
      "You are a troubleshooting assistant. The flowchart you must follow is given as a JSON edge "
      "list:\n" +
      graph.dump() +
      "\nAt every turn decide which flowchart node the conversation is at and reply to the user. "
      "Answer in the format:\nNODE: <node id>\nREPLY: <message to the user>";
  Messages prior(history.begin(), history.end() - 1);
  std::string prompt = llm::key_tag({{"task", "baseline"}, {"turn", std::to_string(turn)}});
  if (!prior.empty()) prompt += "\nConversation so far:\n" + transcript_text(prior);
  prompt += "\nLatest user message:\n" + llm::subject_block(history.back().content);
  const std::string raw = llm::complete(binding, {{Role::system, system}, {Role::user, prompt}},
                                        llm::creative_params());
  auto parsed = parse_baseline_reply(fc, raw);
  if (parsed.utterance.empty()) parsed.utterance = "(no reply)";
  return parsed;
}

SerializedBaselineSession::SerializedBaselineSession(std::shared_ptr<const Flowchart> fc,
                                                     int turn_budget, llm::BindingPtr binding)
    : fc_(std::move(fc)), budget_(turn_budget), binding_(std::move(binding)) {
  if (budget_ < 1) throw PreconditionError("turn budget must be >= 1");
}

TurnOutcome SerializedBaselineSession::open(std::string_view first_utterance) {
  return take_turn(first_utterance);
}

TurnOutcome SerializedBaselineSession::respond(std::string_view utterance) {
  if (phase_ != Phase::active) throw PreconditionError("session is not active");
  return take_turn(utterance);
}

TurnOutcome SerializedBaselineSession::take_turn(std::string_view utterance) {
  // State is committed only after the model call succeeds, so a failed turn
  // can be retried.
  const int turn = turn_ + 1;
  const NodeId previous = predicted_.empty() ? NodeId{} : predicted_.back();
  TurnOutcome outcome{OutcomeKind::stayed, {}, previous, 0, {}, std::nullopt};
  if (turn > budget_) {
    turn_ = turn;
    phase_ = Phase::budget_exceeded;
    outcome.kind = OutcomeKind::budget_exceeded;
    outcome.utterance = "We have reached the limit of this conversation.";
    history_.push_back({Role::user, std::string(utterance)});
    history_.push_back({Role::assistant, outcome.utterance});
    return outcome;
  }
  Messages history = history_;
  history.push_back({Role::user, std::string(utterance)});
  const BaselineTurn bt = serialized_baseline_turn(*fc_, history, *binding_, turn);
  history.push_back({Role::assistant, bt.utterance});
  history_ = std::move(history);
  turn_ = turn;
  outcome.utterance = bt.utterance;
  outcome.node = bt.claimed;
  if (predicted_.empty() || bt.claimed != previous) {
    predicted_.push_back(bt.claimed);
    outcome.walk = {bt.claimed};
    if (turn_ > 1) {
      outcome.kind = OutcomeKind::transitioned;
      outcome.hops = 1;
    }
  }
  if (bt.claimed != kInvalidNode && fc_->terminal_check(bt.claimed)) {
    phase_ = Phase::terminal;
    outcome.kind = OutcomeKind::reached_terminal;
  }
  return outcome;
}

}  // namespace flowdialog::agent
