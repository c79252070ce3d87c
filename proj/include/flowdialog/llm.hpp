#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "flowdialog/error.hpp"

namespace flowdialog::llm {

enum class Role { system, user, assistant };

std::string_view to_string(Role role);

struct ChatMessage {
  Role role;
  std::string content;
};

using Messages = std::vector<ChatMessage>;

/// Non-empty contents; after an optional system prefix, roles alternate
/// user/assistant starting with user.
void check_messages(const Messages& messages);

struct DecodingParams {
  double temperature = 0.0;
  int max_tokens = 512;
  std::optional<std::uint64_t> seed;
};

/// Deterministic decoding for choices, 0.7 for rephrasing and simulation.
DecodingParams choice_params();
DecodingParams creative_params();

// Prompt conventions shared by every caller.
//
// The first line of the final user message is a key tag, `@@ task=x|node=y`.
// Scripted bindings route on it so tests can target semantics rather than the
// exact prose. A `<subject>` block carries the text a prompt is about.

/// Builds the tag line from ordered `field=value` pairs.
std::string key_tag(const std::vector<std::pair<std::string, std::string>>& fields);

/// Key of the final user message without the `@@ ` prefix, if tagged.
std::optional<std::string> prompt_key(const Messages& messages);

std::string subject_block(std::string_view subject);

/// Content of the first `<subject>` block of the final user message.
std::optional<std::string> prompt_subject(const Messages& messages);

class ModelBinding {
 public:
  virtual ~ModelBinding() = default;
  virtual std::string complete(const Messages& messages, const DecodingParams& params) const = 0;
  virtual std::string_view kind() const noexcept = 0;
  /// Description safe for transcripts and logs; never contains credentials.
  virtual nlohmann::json describe() const = 0;
};

using BindingPtr = std::shared_ptr<const ModelBinding>;

/// Fully deterministic binding. A prompt key `a|b|c` is looked up as `a|b|c`,
/// then `a|b`, then `a`; then the normalized subject block is looked up in the
/// subject table; then the responder (when set) is asked; then the default
/// response is returned.
class ScriptedBinding final : public ModelBinding {
 public:
  using Responder = std::function<std::optional<std::string>(const Messages&)>;

  explicit ScriptedBinding(std::map<std::string, std::string> responses = {},
                           std::string default_response = "NONE", Responder responder = {});

  /// Falls back to echoing the prompt's subject block.
  static std::shared_ptr<ScriptedBinding> echo(std::map<std::string, std::string> responses = {},
                                               std::string default_response = "NONE");

  /// Response for prompts whose subject block normalizes to `subject`.
  void add_subject_response(std::string_view subject, std::string response);

  std::string complete(const Messages& messages, const DecodingParams& params) const override;
  std::string_view kind() const noexcept override { return "scripted"; }
  nlohmann::json describe() const override;

 private:
  std::map<std::string, std::string> responses_;
  std::map<std::string, std::string> subjects_;
  std::string default_response_;
  Responder responder_;
  bool echo_ = false;
};

struct RetryPolicy {
  int attempts = 3;
  std::chrono::milliseconds initial_backoff{500};
  double multiplier = 2.0;
};

struct RemoteConfig {
  std::string endpoint;        // base URL, e.g. http://localhost:11434/v1
  std::string model;
  std::string credential_env;  // environment variable holding the API key
  RetryPolicy retry;
  std::chrono::seconds timeout{120};
  std::chrono::milliseconds connect_timeout{10'000};
  int max_in_flight = 4;
};

/// OpenAI-style chat-completion client.
class RemoteBinding final : public ModelBinding {
 public:
  explicit RemoteBinding(RemoteConfig config);
  ~RemoteBinding() override;

  std::string complete(const Messages& messages, const DecodingParams& params) const override;
  std::string_view kind() const noexcept override { return "remote"; }
  nlohmann::json describe() const override;

  static nlohmann::json request_body(const std::string& model, const Messages& messages,
                                     const DecodingParams& params);
  /// Extracts choices[0].message.content; throws MalformedResponseError.
  static std::string parse_response(const std::string& body);

 private:
  std::string attempt(const Messages& messages, const DecodingParams& params) const;

  struct Impl;
  RemoteConfig config_;
  std::unique_ptr<Impl> impl_;
};

/// Builds a binding from configuration:
///   {"kind": "scripted", "responses": {...}, "subjects": {...}, "default": "...",
///    "echo": bool}
///   {"kind": "remote", "endpoint": "...", "model": "...", "credential_env": "..."}
BindingPtr make_binding(const nlohmann::json& config);

std::string complete(const ModelBinding& binding, const Messages& messages,
                     const DecodingParams& params);

/// Maps raw model output onto one of `labels`: normalized equality first,
/// then a unique whole-word occurrence. Ambiguity or no match gives nullopt.
std::optional<std::string> resolve_choice(std::string_view raw,
                                          const std::vector<std::string>& labels);

/// Asks the model to pick one label; nullopt is the NONE answer. The options
/// are appended to the final user message.
std::optional<std::string> structured_choice(const ModelBinding& binding, Messages messages,
                                             const std::vector<std::string>& labels,
                                             const DecodingParams& params = choice_params());

struct Violation {
  std::size_t index;  // 1-based position in the simulated utterance list
  std::string explanation;
  bool operator==(const Violation&) const = default;
};

/// Parses `NO_VIOLATIONS` or lines of `VIOLATION <index>: <explanation>`.
std::vector<Violation> parse_verdict(std::string_view verdict, std::size_t simulated_count);

std::vector<Violation> judge_faithfulness(const ModelBinding& binding,
                                          const std::vector<std::string>& ground_truth,
                                          const std::vector<std::string>& simulated);

}  // namespace flowdialog::llm
