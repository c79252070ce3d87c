#include "flowdialog/llm.hpp"

#include <regex>

#include "flowdialog/text.hpp"

namespace flowdialog::llm {

using nlohmann::json;

namespace {

constexpr std::string_view kTagPrefix = "@@ ";
constexpr std::string_view kSubjectOpen = "<subject>";
constexpr std::string_view kSubjectClose = "</subject>";

const ChatMessage* final_user(const Messages& messages) {
  for (auto it = messages.rbegin(); it != messages.rend(); ++it) {
    if (it->role == Role::user) return &*it;
  }
  return nullptr;
}

}  // namespace

std::string_view to_string(Role role) {
  switch (role) {
    case Role::system: return "system";
    case Role::user: return "user";
    case Role::assistant: return "assistant";
  }
  return "user";
}

void check_messages(const Messages& messages) {
  if (messages.empty()) throw PreconditionError("no messages");
  std::size_t i = 0;
  if (messages[0].role == Role::system) ++i;
  if (i == messages.size()) throw PreconditionError("messages contain only a system prompt");
  Role expected = Role::user;
  for (std::size_t k = 0; k < messages.size(); ++k) {
    if (text::trim(messages[k].content).empty()) {
      throw PreconditionError("message " + std::to_string(k) + " is empty");
    }
  }
  for (; i < messages.size(); ++i) {
    if (messages[i].role != expected) {
      throw PreconditionError("message " + std::to_string(i) + " should have role " +
                              std::string(to_string(expected)));
    }
    expected = expected == Role::user ? Role::assistant : Role::user;
  }
}

DecodingParams choice_params() { return DecodingParams{0.0, 64, std::nullopt}; }
DecodingParams creative_params() { return DecodingParams{0.7, 512, std::nullopt}; }

std::string key_tag(const std::vector<std::pair<std::string, std::string>>& fields) {
  std::string tag(kTagPrefix);
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) tag += '|';
    tag += fields[i].first + "=" + fields[i].second;
  }
  return tag;
}

std::optional<std::string> prompt_key(const Messages& messages) {
  const ChatMessage* m = final_user(messages);
  if (!m || m->content.rfind(kTagPrefix, 0) != 0) return std::nullopt;
  const std::size_t nl = m->content.find('\n');
  return text::trim(m->content.substr(kTagPrefix.size(), nl == std::string::npos
                                                             ? std::string::npos
                                                             : nl - kTagPrefix.size()));
}

std::string subject_block(std::string_view subject) {
  std::string s(kSubjectOpen);
  s += "\n";
  s += subject;
  s += "\n";
  s += kSubjectClose;
  return s;
}

std::optional<std::string> prompt_subject(const Messages& messages) {
  const ChatMessage* m = final_user(messages);
  if (!m) return std::nullopt;
  const std::size_t open = m->content.find(kSubjectOpen);
  if (open == std::string::npos) return std::nullopt;
  const std::size_t begin = open + kSubjectOpen.size() + 1;
  const std::size_t close = m->content.find(kSubjectClose, begin);
  if (close == std::string::npos || close < begin) return std::nullopt;
  return m->content.substr(begin, close - begin - 1);
}

ScriptedBinding::ScriptedBinding(std::map<std::string, std::string> responses,
                                 std::string default_response, Responder responder)
    : responses_(std::move(responses)),
      default_response_(std::move(default_response)),
      responder_(std::move(responder)) {}

std::shared_ptr<ScriptedBinding> ScriptedBinding::echo(std::map<std::string, std::string> responses,
                                                       std::string default_response) {
  auto b = std::make_shared<ScriptedBinding>(std::move(responses), std::move(default_response),
                                             [](const Messages& m) { return prompt_subject(m); });
  b->echo_ = true;
  return b;
}

std::string ScriptedBinding::complete(const Messages& messages, const DecodingParams&) const {
  if (auto key = prompt_key(messages)) {
    std::string k = *key;
    while (true) {
      if (auto it = responses_.find(k); it != responses_.end()) return it->second;
      const std::size_t bar = k.rfind('|');
      if (bar == std::string::npos) break;
      k.resize(bar);
    }
  }
  if (!subjects_.empty()) {
    if (auto subject = prompt_subject(messages)) {
      if (auto it = subjects_.find(text::normalize(*subject)); it != subjects_.end()) {
        return it->second;
      }
    }
  }
  if (responder_) {
    if (auto r = responder_(messages)) return *r;
  }
  return default_response_;
}

void ScriptedBinding::add_subject_response(std::string_view subject, std::string response) {
  subjects_[text::normalize(subject)] = std::move(response);
}

json ScriptedBinding::describe() const {
  return {{"kind", "scripted"},
          {"responses", responses_.size()},
          {"subjects", subjects_.size()},
          {"default", default_response_},
          {"echo", echo_}};
}

BindingPtr make_binding(const json& config) {
  const std::string kind = config.value("kind", "scripted");
  if (kind == "scripted") {
    std::map<std::string, std::string> responses;
    if (auto r = config.find("responses"); r != config.end()) {
      if (!r->is_object()) throw SchemaError("binding.responses must be an object");
      for (auto& [k, v] : r->items()) responses.emplace(k, v.get<std::string>());
    }
    std::string def = config.value("default", "NONE");
    auto binding = config.value("echo", false)
                       ? ScriptedBinding::echo(std::move(responses), def)
                       : std::make_shared<ScriptedBinding>(std::move(responses), std::move(def));
    if (auto s = config.find("subjects"); s != config.end()) {
      if (!s->is_object()) throw SchemaError("binding.subjects must be an object");
      for (auto& [k, v] : s->items()) binding->add_subject_response(k, v.get<std::string>());
    }
    return binding;
  }
  if (kind == "remote") {
    RemoteConfig rc;
    rc.endpoint = config.value("endpoint", "");
    rc.model = config.value("model", "");
    rc.credential_env = config.value("credential_env", "");
    rc.max_in_flight = config.value("max_in_flight", 4);
    rc.retry.attempts = config.value("retry_attempts", 3);
    rc.retry.initial_backoff = std::chrono::milliseconds(config.value("retry_backoff_ms", 500));
    rc.timeout = std::chrono::seconds(config.value("timeout_s", 120));
    rc.connect_timeout = std::chrono::milliseconds(config.value("connect_timeout_ms", 10'000));
    if (rc.endpoint.empty() || rc.model.empty()) {
      throw SchemaError("remote binding needs 'endpoint' and 'model'");
    }
    return std::make_shared<RemoteBinding>(std::move(rc));
  }
  throw SchemaError("unknown binding kind '" + kind + "'");
}

std::string complete(const ModelBinding& binding, const Messages& messages,
                     const DecodingParams& params) {
  check_messages(messages);
  return binding.complete(messages, params);
}

std::optional<std::string> resolve_choice(std::string_view raw,
                                          const std::vector<std::string>& labels) {
  const std::string out = text::normalize_label(raw);
  if (out.empty()) return std::nullopt;
  for (const auto& l : labels) {
    if (text::normalize_label(l) == out) return l;
  }
  // Whole-word containment, accepted only when exactly one label occurs.
  const std::string padded = " " + text::join(text::tokenize(raw), " ") + " ";
  std::optional<std::string> found;
  for (const auto& l : labels) {
    const std::string needle = " " + text::join(text::tokenize(l), " ") + " ";
    if (needle.size() <= 2) continue;
    if (padded.find(needle) != std::string::npos) {
      if (found) return std::nullopt;
      found = l;
    }
  }
  return found;
}

std::optional<std::string> structured_choice(const ModelBinding& binding, Messages messages,
                                             const std::vector<std::string>& labels,
                                             const DecodingParams& params) {
  if (labels.empty()) throw PreconditionError("structured_choice needs at least one label");
  for (std::size_t i = 0; i < labels.size(); ++i) {
    for (std::size_t j = i + 1; j < labels.size(); ++j) {
      if (text::normalize_label(labels[i]) == text::normalize_label(labels[j])) {
        throw PreconditionError("duplicate label '" + labels[i] + "'");
      }
    }
  }
  if (messages.empty() || messages.back().role != Role::user) {
    throw PreconditionError("structured_choice needs a final user message");
  }
  std::string options = "\n\nAnswer with exactly one of the following options, or NONE if none applies:";
  for (const auto& l : labels) options += "\n- " + l;
  messages.back().content += options;
  return resolve_choice(complete(binding, messages, params), labels);
}

std::vector<Violation> parse_verdict(std::string_view verdict, std::size_t simulated_count) {
  const std::string trimmed = text::trim(verdict);
  if (text::normalize_label(trimmed) == "no_violations") return {};
  static const std::regex line_re(R"(^\s*VIOLATION\s+(\d+)\s*:\s*(.*?)\s*$)", std::regex::icase);
  std::vector<Violation> out;
  std::size_t start = 0;
  while (start <= trimmed.size()) {
    std::size_t nl = trimmed.find('\n', start);
    if (nl == std::string::npos) nl = trimmed.size();
    const std::string line = trimmed.substr(start, nl - start);
    std::smatch m;
    if (std::regex_match(line, m, line_re)) {
      const std::size_t index = std::stoul(m[1].str());
      if (index == 0 || index > simulated_count) {
        throw UnparseableVerdictError("verdict cites utterance " + std::to_string(index) +
                                      " of " + std::to_string(simulated_count));
      }
      out.push_back(Violation{index, m[2].str()});
    }
    start = nl + 1;
  }
  if (out.empty()) throw UnparseableVerdictError("cannot parse judge verdict: " + trimmed);
  return out;
}

std::vector<Violation> judge_faithfulness(const ModelBinding& binding,
                                          const std::vector<std::string>& ground_truth,
                                          const std::vector<std::string>& simulated) {
  if (ground_truth.empty() || simulated.empty()) {
    throw PreconditionError("judge_faithfulness needs non-empty utterance lists");
  }
  std::string prompt = key_tag({{"task", "judge"}});
  prompt +=
      "\nThe ground-truth user utterances below are factual constraints. Decide whether any "
      "simulated user utterance contradicts them.\n\nGround-truth utterances:";
  for (std::size_t i = 0; i < ground_truth.size(); ++i) {
    prompt += "\n" + std::to_string(i + 1) + ". " + ground_truth[i];
  }
  prompt += "\n\nSimulated utterances:";
  for (std::size_t i = 0; i < simulated.size(); ++i) {
    prompt += "\n" + std::to_string(i + 1) + ". " + simulated[i];
  }
  prompt +=
      "\n\nReply NO_VIOLATIONS if nothing contradicts the constraints. Otherwise reply with one "
      "line per contradicting simulated utterance: VIOLATION <number>: <explanation>";
  Messages messages{
      {Role::system, "You are a careful fact-checking judge for dialogue data."},
      {Role::user, prompt},
  };
  return parse_verdict(complete(binding, messages, choice_params()), simulated.size());
}

}  // namespace flowdialog::llm
