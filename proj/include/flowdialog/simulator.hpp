#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "flowdialog/flowgraph.hpp"
#include "flowdialog/llm.hpp"

namespace flowdialog::simulator {

struct ProfileStep {
  NodeId node;
  std::string attribute;
  std::string condition;  // edge taken out of `node`; empty on the final step
};

struct SimulatorProfile {
  NodePath gt_path;
  std::vector<ProfileStep> goal;        // one step per ground-truth node
  std::vector<ProfileStep> background;  // root up to, not including, gt_path[0]
  std::optional<std::string> reference_dialogue;
  double temperature = 0.7;
};

class InvalidPathError : public Error {
 public:
  using Error::Error;
};

/// Raised by the scripted simulator when the agent asks about a node that is
/// not on the profile's path.
class OffPathError : public Error {
 public:
  using Error::Error;
};

SimulatorProfile build_profile(const Flowchart& fc, const NodePath& gt_path,
                               std::optional<std::string> reference_dialogue = std::nullopt);

enum class SimulatorKind { llm, scripted };

struct FaqInjection {
  int turn;  // 1-based user turn index
  std::string question;
};

/// Plays the user side of one episode.
class UserSimulator {
 public:
  virtual ~UserSimulator() = default;
  virtual std::string first_utterance() = 0;
  /// Next user turn (`turn` is its 1-based index), or nullopt to end.
  virtual std::optional<std::string> next_user_utterance(std::string_view agent_utterance,
                                                         const llm::Messages& history,
                                                         int turn) = 0;
};

/// Deterministic test double. Answers with the condition of the profile step
/// whose attribute is contained (normalized) in the agent utterance, and
/// injects FAQ questions at configured turns.
class ScriptedSimulator final : public UserSimulator {
 public:
  explicit ScriptedSimulator(SimulatorProfile profile, std::vector<FaqInjection> faqs = {});

  std::string first_utterance() override;
  std::optional<std::string> next_user_utterance(std::string_view agent_utterance,
                                                 const llm::Messages& history, int turn) override;

 private:
  SimulatorProfile profile_;
  std::map<int, std::string> faqs_;
  std::vector<ProfileStep> steps_;  // background followed by goal
  std::size_t cursor_ = 0;
};

class LlmSimulator final : public UserSimulator {
 public:
  LlmSimulator(SimulatorProfile profile, llm::BindingPtr binding, std::vector<FaqInjection> faqs = {},
               std::optional<std::uint64_t> seed = std::nullopt);

  std::string first_utterance() override;
  std::optional<std::string> next_user_utterance(std::string_view agent_utterance,
                                                 const llm::Messages& history, int turn) override;

  /// System prompt holding the goal path, background facts and reference.
  std::string system_prompt() const;

 private:
  std::string ask(const std::string& prompt, int turn) const;

  SimulatorProfile profile_;
  llm::BindingPtr binding_;
  std::map<int, std::string> faqs_;
  std::optional<std::uint64_t> seed_;
};

inline constexpr std::string_view kEndMarker = "[END]";

std::string first_utterance(const SimulatorProfile& profile, SimulatorKind kind,
                            const llm::BindingPtr& binding);

}  // namespace flowdialog::simulator
