#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>

#include <nlohmann/json.hpp>

#include "flowdialog/agent.hpp"
#include "flowdialog/harness.hpp"

namespace httplib {
class Server;
}

namespace flowdialog::service {

/// Error carrying the HTTP status it maps to.
class ServiceError : public Error {
 public:
  ServiceError(int status, std::string code, const std::string& message)
      : Error(message), status_(status), code_(std::move(code)) {}
  int status() const noexcept { return status_; }
  const std::string& code() const noexcept { return code_; }

 private:
  int status_;
  std::string code_;
};

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::filesystem::path flowchart_dir;
  std::optional<std::filesystem::path> faqs;
  nlohmann::json binding = {{"kind", "scripted"}, {"echo", true}};
  agent::AgentConfig agent;
  std::chrono::seconds expiry{30 * 60};
  std::optional<std::filesystem::path> transcript_dir;

  /// Relative paths resolve against `base_dir`.
  static ServiceConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
  /// Overrides from FLOWDIALOG_HOST, FLOWDIALOG_PORT, FLOWDIALOG_FLOWCHARTS,
  /// FLOWDIALOG_FAQS, FLOWDIALOG_BINDING (JSON) and FLOWDIALOG_TRANSCRIPTS.
  void apply_env();
};

using Clock = std::function<std::chrono::steady_clock::time_point()>;

class DialogueService {
 public:
  DialogueService(harness::FlowchartRegistry flowcharts, llm::BindingPtr binding,
                  std::shared_ptr<const knowledge::FaqStore> faqs, ServiceConfig config,
                  Clock clock = [] { return std::chrono::steady_clock::now(); });

  /// Loads flowcharts, FAQs and the binding named by the config.
  static std::unique_ptr<DialogueService> from_config(const ServiceConfig& config);

  /// {session_id, reply, node, outcome, phase, path}
  nlohmann::json create_session(const std::string& flowchart_id, const std::string& message);
  /// {session_id, reply, node, outcome, phase, path, turn}
  nlohmann::json post_message(const std::string& session_id, const std::string& message);
  nlohmann::json get_session(const std::string& session_id);
  nlohmann::json list_flowcharts() const;
  /// {id, root, nodes:[{id, text, kind}], edges:[{src, dst, cond}]}
  nlohmann::json flowchart_view(const std::string& flowchart_id) const;

  /// Drops sessions idle longer than the expiry. Returns how many.
  std::size_t sweep();
  std::size_t session_count() const;

  void register_routes(httplib::Server& server);

 private:
  struct Slot;

  std::shared_ptr<Slot> find_live(const std::string& session_id);
  nlohmann::json turn_json(const Slot& slot, const agent::TurnOutcome& outcome) const;
  void persist(const Slot& slot) const;

  harness::FlowchartRegistry flowcharts_;
  llm::BindingPtr binding_;
  std::shared_ptr<const knowledge::FaqStore> faqs_;
  ServiceConfig config_;
  Clock clock_;

  mutable std::mutex store_mutex_;
  std::map<std::string, std::shared_ptr<Slot>> sessions_;
  std::set<std::string> expired_;
};

/// 32 lowercase hex characters from a 128-bit random value.
std::string random_session_id();

}  // namespace flowdialog::service
