#include "flowdialog/transcript.hpp"

#include <fstream>

#include "flowdialog/ingest.hpp"

namespace flowdialog::harness {

using nlohmann::json;

void TranscriptLog::append(TurnEntry entry) {
  if (footer_) throw PreconditionError("transcript is closed");
  entries_.push_back(std::move(entry));
}

void TranscriptLog::close(LogFooter footer) {
  if (footer_) throw PreconditionError("transcript is already closed");
  footer_ = std::move(footer);
}

std::string TranscriptLog::to_jsonl() const {
  std::string out;
  json h = {{"type", "header"},
            {"schema", kTranscriptSchema},
            {"sample_id", header_.sample_id},
            {"flowchart_id", header_.flowchart_id},
            {"gt_path", header_.gt_path},
            {"budget", header_.budget},
            {"gt_initial_is_root", header_.gt_initial_is_root},
            {"agent_kind", header_.agent_kind}};
  out += h.dump() + "\n";
  for (const auto& e : entries_) {
    json j = {{"type", "turn"},
              {"turn", e.turn},
              {"speaker", e.speaker == Speaker::user ? "user" : "agent"},
              {"utterance", e.utterance},
              {"elapsed_ms", e.elapsed_ms}};
    if (e.node) j["node"] = *e.node;
    if (e.outcome) j["outcome"] = std::string(agent::to_string(*e.outcome));
    if (!e.walk.empty()) j["walk"] = e.walk;
    out += j.dump() + "\n";
  }
  if (footer_) {
    json f = {{"type", "footer"}, {"status", footer_->status}, {"phase", footer_->phase}};
    if (footer_->reason) f["reason"] = *footer_->reason;
    out += f.dump() + "\n";
  }
  return out;
}

TranscriptLog TranscriptLog::parse_jsonl(std::string_view text) {
  TranscriptLog log;
  bool have_header = false;
  std::size_t start = 0;
  int line_no = 0;
  while (start < text.size()) {
    std::size_t nl = text.find('\n', start);
    if (nl == std::string_view::npos) nl = text.size();
    const std::string_view line = text.substr(start, nl - start);
    start = nl + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    const std::string where = "transcript line " + std::to_string(line_no);
    if (log.footer_) throw MalformedLogError(where + ": content after footer");
    try {
      const json j = json::parse(line);
      const std::string type = j.at("type").get<std::string>();
      if (type == "header") {
        if (have_header) throw MalformedLogError(where + ": duplicate header");
        if (j.at("schema").get<int>() != kTranscriptSchema) {
          throw MalformedLogError(where + ": unsupported schema version");
        }
        log.header_.sample_id = j.at("sample_id").get<std::string>();
        log.header_.flowchart_id = j.at("flowchart_id").get<std::string>();
        log.header_.gt_path = j.at("gt_path").get<NodePath>();
        log.header_.budget = j.at("budget").get<int>();
        log.header_.gt_initial_is_root = j.at("gt_initial_is_root").get<bool>();
        log.header_.agent_kind = j.value("agent_kind", "");
        have_header = true;
      } else if (type == "turn") {
        if (!have_header) throw MalformedLogError(where + ": turn before header");
        TurnEntry e;
        e.turn = j.at("turn").get<int>();
        const std::string speaker = j.at("speaker").get<std::string>();
        if (speaker != "user" && speaker != "agent") {
          throw MalformedLogError(where + ": unknown speaker '" + speaker + "'");
        }
        e.speaker = speaker == "user" ? Speaker::user : Speaker::agent;
        e.utterance = j.at("utterance").get<std::string>();
        e.elapsed_ms = j.value("elapsed_ms", 0.0);
        if (j.contains("node")) e.node = j["node"].get<std::string>();
        if (j.contains("outcome")) {
          e.outcome = agent::parse_outcome_kind(j["outcome"].get<std::string>());
          if (!e.outcome) throw MalformedLogError(where + ": unknown outcome kind");
        }
        if (j.contains("walk")) e.walk = j["walk"].get<NodePath>();
        log.entries_.push_back(std::move(e));
      } else if (type == "footer") {
        if (!have_header) throw MalformedLogError(where + ": footer before header");
        LogFooter f;
        f.status = j.at("status").get<std::string>();
        f.phase = j.value("phase", "");
        if (j.contains("reason")) f.reason = j["reason"].get<std::string>();
        log.footer_ = std::move(f);
      } else {
        throw MalformedLogError(where + ": unknown entry type '" + type + "'");
      }
    } catch (const json::exception& e) {
      throw MalformedLogError(where + ": " + e.what());
    }
  }
  if (!have_header) throw MalformedLogError("transcript has no header");
  if (!log.footer_) throw MalformedLogError("transcript is truncated: no footer");
  return log;
}

void TranscriptLog::write(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write transcript: " + path.string());
  out << to_jsonl();
}

TranscriptLog TranscriptLog::read(const std::filesystem::path& path) {
  return parse_jsonl(ingest::read_text_file(path));
}

evaluation::EpisodeRecord episode_to_record(const TranscriptLog& log) {
  evaluation::EpisodeRecord r;
  r.sample_id = log.header().sample_id;
  r.ground_truth = log.header().gt_path;
  r.budget = log.header().budget;
  r.gt_initial_is_root = log.header().gt_initial_is_root;

  int pending = 0;
  bool grounded = false;
  for (const auto& e : log.entries()) {
    if (e.speaker == Speaker::user) {
      ++r.turns;
      continue;
    }
    if (!e.node || e.node->empty() || !e.outcome) {
      throw MalformedLogError(r.sample_id + ": agent turn " + std::to_string(e.turn) +
                              " lacks its node or outcome annotation");
    }
    if (!grounded) {
      r.predicted.push_back(*e.node);
      grounded = true;
      continue;
    }
    switch (*e.outcome) {
      case agent::OutcomeKind::transitioned:
      case agent::OutcomeKind::reached_terminal:
        r.transitions.push_back(pending + 1);
        pending = 0;
        r.predicted.push_back(*e.node);
        break;
      case agent::OutcomeKind::faq_answered:
        ++r.faq_turns;
        ++pending;
        break;
      case agent::OutcomeKind::stayed:
        ++pending;
        break;
      case agent::OutcomeKind::budget_exceeded:
        break;
    }
  }
  if (!grounded) throw MalformedLogError(r.sample_id + ": transcript has no agent turn");
  if (r.ground_truth.empty()) throw MalformedLogError(r.sample_id + ": empty ground-truth path");
  return r;
}

evaluation::EpisodeRecord replay(const std::filesystem::path& log_path) {
  return episode_to_record(TranscriptLog::read(log_path));
}

FaqLocalAccuracy faq_local_accuracy(const std::vector<TranscriptLog>& logs) {
  FaqLocalAccuracy acc{0.0, 0, 0};
  for (const auto& log : logs) {
    const auto& gt = log.header().gt_path;
    std::vector<const TurnEntry*> agent_turns;
    for (const auto& e : log.entries()) {
      if (e.speaker == Speaker::agent) agent_turns.push_back(&e);
    }
    for (std::size_t i = 0; i < agent_turns.size(); ++i) {
      if (agent_turns[i]->outcome != agent::OutcomeKind::faq_answered) continue;
      if (i > 0 && agent_turns[i - 1]->outcome == agent::OutcomeKind::faq_answered) continue;
      ++acc.exchanges;
      const NodeId held = agent_turns[i]->node.value_or("");
      std::optional<NodeId> next;
      for (std::size_t k = i + 1; k < agent_turns.size(); ++k) {
        const auto o = agent_turns[k]->outcome;
        if (o == agent::OutcomeKind::transitioned || o == agent::OutcomeKind::reached_terminal) {
          next = agent_turns[k]->node;
          break;
        }
      }
      if (!next) continue;
      for (std::size_t p = 0; p + 1 < gt.size(); ++p) {
        if (gt[p] == held && gt[p + 1] == *next) {
          ++acc.correct;
          break;
        }
      }
    }
  }
  if (acc.exchanges == 0) throw NoFaqExchangesError("logs contain no FAQ exchanges");
  acc.value = static_cast<double>(acc.correct) / static_cast<double>(acc.exchanges);
  return acc;
}

}  // namespace flowdialog::harness
