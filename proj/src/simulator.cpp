#include "flowdialog/simulator.hpp"

#include "flowdialog/text.hpp"

namespace flowdialog::simulator {

using llm::Role;

namespace {

ProfileStep step_for(const Flowchart& fc, const NodePath& path, std::size_t i) {
  ProfileStep s{path[i], fc.node_attr(path[i]), {}};
  if (i + 1 < path.size()) {
    for (const Edge* e : fc.out_edges(path[i])) {
      if (e->target == path[i + 1]) {
        s.condition = e->condition;
        break;
      }
    }
  }
  return s;
}

std::map<int, std::string> index_faqs(const std::vector<FaqInjection>& faqs) {
  std::map<int, std::string> out;
  for (const auto& f : faqs) {
    if (f.turn < 2) throw PreconditionError("faq injections start at user turn 2");
    out[f.turn] = f.question;
  }
  return out;
}

}  // namespace

SimulatorProfile build_profile(const Flowchart& fc, const NodePath& gt_path,
                               std::optional<std::string> reference_dialogue) {
  if (gt_path.empty()) throw InvalidPathError("ground-truth path is empty");
  for (const auto& n : gt_path) {
    if (!fc.contains(n)) throw InvalidPathError("ground-truth node '" + n + "' is not in the flowchart");
  }
  if (!is_edge_consistent(fc, gt_path)) {
    throw InvalidPathError("ground-truth path does not follow flowchart edges");
  }
  SimulatorProfile p;
  p.gt_path = gt_path;
  p.reference_dialogue = std::move(reference_dialogue);
  for (std::size_t i = 0; i < gt_path.size(); ++i) p.goal.push_back(step_for(fc, gt_path, i));
  if (gt_path.front() != fc.root()) {
    const auto lead = shortest_path(fc, fc.root(), gt_path.front());
    if (!lead) throw InvalidPathError("ground-truth start is unreachable from the root");
    for (std::size_t i = 0; i + 1 < lead->size(); ++i) {
      p.background.push_back(step_for(fc, *lead, i));
    }
  }
  return p;
}

ScriptedSimulator::ScriptedSimulator(SimulatorProfile profile, std::vector<FaqInjection> faqs)
    : profile_(std::move(profile)), faqs_(index_faqs(faqs)) {
  steps_ = profile_.background;
  steps_.insert(steps_.end(), profile_.goal.begin(), profile_.goal.end());
  cursor_ = profile_.background.size();
}

std::string ScriptedSimulator::first_utterance() {
  std::vector<std::string> facts;
  for (const auto& s : profile_.background) facts.push_back(s.condition);
  const auto& first = profile_.goal.front();
  facts.push_back(first.condition.empty() ? first.attribute : first.condition);
  return text::join(facts, ". ");
}

std::optional<std::string> ScriptedSimulator::next_user_utterance(std::string_view agent_utterance,
                                                                  const llm::Messages&, int turn) {
  if (auto f = faqs_.find(turn); f != faqs_.end()) return f->second;

  const std::string said = text::normalize(agent_utterance);
  std::size_t best_len = 0;
  std::vector<std::size_t> best;
  for (std::size_t i = 0; i < steps_.size(); ++i) {
    const std::string attr = text::normalize(steps_[i].attribute);
    if (attr.empty() || said.find(attr) == std::string::npos) continue;
    if (attr.size() > best_len) {
      best_len = attr.size();
      best.clear();
    }
    if (attr.size() == best_len) best.push_back(i);
  }
  if (best.empty()) {
    throw OffPathError("agent utterance matches no step of the ground-truth path: '" +
                       std::string(agent_utterance) + "'");
  }
  // Prefer the earliest candidate at or after the cursor so that revisited
  // nodes on cyclic paths are answered in order.
  std::size_t pick = best.back();
  for (std::size_t i : best) {
    if (i >= cursor_) {
      pick = i;
      break;
    }
  }
  const ProfileStep& s = steps_[pick];
  if (s.condition.empty()) return std::nullopt;
  cursor_ = pick + 1;
  return s.condition;
}

LlmSimulator::LlmSimulator(SimulatorProfile profile, llm::BindingPtr binding,
                           std::vector<FaqInjection> faqs, std::optional<std::uint64_t> seed)
    : profile_(std::move(profile)), binding_(std::move(binding)), faqs_(index_faqs(faqs)), seed_(seed) {}

std::string LlmSimulator::system_prompt() const {
  std::string s =
      "You play a user who needs help with a problem and talks to a troubleshooting assistant. "
      "Stay consistent with the facts below and never invent other facts.\n";
  if (!profile_.background.empty()) {
    s += "\nWhat you already know before the conversation starts:";
    for (const auto& b : profile_.background) s += "\n- " + b.attribute + " -> " + b.condition;
  }
  s += "\n\nThe situation you are in, step by step:";
  for (const auto& g : profile_.goal) {
    s += "\n- " + g.attribute;
    if (!g.condition.empty()) s += " -> " + g.condition;
  }
  if (profile_.reference_dialogue) {
    s += "\n\nA reference conversation in the style you should use:\n" + *profile_.reference_dialogue;
  }
  s += "\n\nAnswer the assistant briefly and naturally, in your own words. When the assistant "
       "gives you the final solution, reply with " +
       std::string(kEndMarker) + ".";
  return s;
}

std::string LlmSimulator::ask(const std::string& prompt, int turn) const {
  auto params = llm::creative_params();
  params.temperature = profile_.temperature;
  if (seed_) params.seed = *seed_ + static_cast<std::uint64_t>(turn);
  return text::trim(llm::complete(*binding_, {{Role::system, system_prompt()}, {Role::user, prompt}},
                                  params));
}

std::string LlmSimulator::first_utterance() {
  std::string prompt = llm::key_tag({{"task", "simulate"}, {"turn", "1"}});
  prompt += "\nWrite your opening message describing your problem.";
  std::string out = ask(prompt, 1);
  if (out.empty()) throw MalformedResponseError("simulator produced an empty opening");
  return out;
}

std::optional<std::string> LlmSimulator::next_user_utterance(std::string_view agent_utterance,
                                                             const llm::Messages& history,
                                                             int turn) {
  if (auto f = faqs_.find(turn); f != faqs_.end()) return f->second;
  std::string prompt = llm::key_tag({{"task", "simulate"}, {"turn", std::to_string(turn)}});
  prompt += "\nConversation so far:";
  for (const auto& m : history) {
    prompt += std::string("\n") + (m.role == Role::user ? "You: " : "Assistant: ") + m.content;
  }
  prompt += "\n\nThe assistant just said:\n" + llm::subject_block(agent_utterance) +
            "\nWrite your next message.";
  std::string out = ask(prompt, turn);
  if (out.empty() || out.find(kEndMarker) != std::string::npos) return std::nullopt;
  return out;
}

std::string first_utterance(const SimulatorProfile& profile, SimulatorKind kind,
                            const llm::BindingPtr& binding) {
  if (kind == SimulatorKind::scripted) return ScriptedSimulator(profile).first_utterance();
  if (!binding) throw PreconditionError("llm simulator needs a binding");
  return LlmSimulator(profile, binding).first_utterance();
}

}  // namespace flowdialog::simulator
