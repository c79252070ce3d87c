#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "flowdialog/agent.hpp"
#include "flowdialog/evaluation.hpp"

namespace flowdialog::harness {

inline constexpr int kTranscriptSchema = 1;

class MalformedLogError : public Error {
 public:
  using Error::Error;
};

enum class Speaker { user, agent };

struct TurnEntry {
  int turn = 0;
  Speaker speaker = Speaker::user;
  std::string utterance;
  std::optional<NodeId> node;                   // agent entries
  std::optional<agent::OutcomeKind> outcome;    // agent entries
  NodePath walk;                                // nodes entered this turn
  double elapsed_ms = 0;
};

struct LogHeader {
  std::string sample_id;
  std::string flowchart_id;
  NodePath gt_path;
  int budget = 0;
  bool gt_initial_is_root = true;
  std::string agent_kind;
};

struct LogFooter {
  std::string status;                 // "completed" or "failed"
  std::optional<std::string> reason;  // failure reason code
  std::string phase;
};

/// Append-only per-episode transcript, persisted as JSON lines: a header
/// line, one line per utterance, and a footer line.
class TranscriptLog {
 public:
  TranscriptLog() = default;
  explicit TranscriptLog(LogHeader header) : header_(std::move(header)) {}

  const LogHeader& header() const noexcept { return header_; }
  const std::vector<TurnEntry>& entries() const noexcept { return entries_; }
  const std::optional<LogFooter>& footer() const noexcept { return footer_; }

  void append(TurnEntry entry);
  void close(LogFooter footer);

  std::string to_jsonl() const;
  /// Throws MalformedLogError on bad lines, a missing header or footer.
  static TranscriptLog parse_jsonl(std::string_view text);

  void write(const std::filesystem::path& path) const;
  static TranscriptLog read(const std::filesystem::path& path);

 private:
  LogHeader header_;
  std::vector<TurnEntry> entries_;
  std::optional<LogFooter> footer_;
};

/// Predicted path, turn count and transition lengths from a transcript.
/// Throws MalformedLogError when an agent entry lacks its annotations.
evaluation::EpisodeRecord episode_to_record(const TranscriptLog& log);

/// Reads a log file and rebuilds the record produced live.
evaluation::EpisodeRecord replay(const std::filesystem::path& log_path);

class NoFaqExchangesError : public Error {
 public:
  using Error::Error;
};

struct FaqLocalAccuracy {
  double value;
  std::size_t exchanges;
  std::size_t correct;
};

/// Share of FAQ exchanges (runs of consecutive faq_answered turns) after which
/// the next transition reaches the ground-truth successor of the held node.
FaqLocalAccuracy faq_local_accuracy(const std::vector<TranscriptLog>& logs);

}  // namespace flowdialog::harness
