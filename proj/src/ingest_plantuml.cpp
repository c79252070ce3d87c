#include <optional>
#include <variant>

#include "flowdialog/ingest.hpp"
#include "flowdialog/text.hpp"

namespace flowdialog::ingest {

namespace {

constexpr const char* kSequentialCondition = "done";
constexpr const char* kDefaultThen = "yes";
constexpr const char* kDefaultElse = "no";

struct Exit {
  NodeId from;
  std::string label;
  bool branch = false;  // produced by a conditional rather than plain sequencing
};

struct IfFrame {
  NodeId decision;
  std::vector<Exit> collected;  // exits of finished arms
  bool has_else = false;
  int line = 0;
  int column = 0;
};

struct RepeatFrame {
  std::optional<NodeId> head;
  int line = 0;
  int column = 0;
};

using Frame = std::variant<IfFrame, RepeatFrame>;

// A line of the diagram with its 1-based line number and the column of its
// first non-blank character.
struct Line {
  std::string text;  // trimmed
  int number = 0;
  int column = 1;
};

class Parser {
 public:
  Parser(std::string_view source, std::string id) : source_(source) { data_.id = std::move(id); }

  Flowchart run() {
    split_lines();
    select_diagram();
    for (std::size_t i = begin_; i < end_; ++i) i = statement(i);
    finish();
    return Flowchart::build(std::move(data_));
  }

 private:
  void split_lines() {
    std::size_t start = 0;
    int number = 1;
    while (start <= source_.size()) {
      std::size_t nl = source_.find('\n', start);
      if (nl == std::string_view::npos) nl = source_.size();
      std::string raw(source_.substr(start, nl - start));
      if (!raw.empty() && raw.back() == '\r') raw.pop_back();
      std::size_t col = 0;
      while (col < raw.size() && (raw[col] == ' ' || raw[col] == '\t')) ++col;
      lines_.push_back(Line{text::trim(raw), number, static_cast<int>(col) + 1});
      raw_.push_back(std::move(raw));
      ++number;
      if (nl == source_.size()) break;
      start = nl + 1;
    }
  }

  void select_diagram() {
    std::optional<std::size_t> open;
    for (std::size_t i = 0; i < lines_.size(); ++i) {
      const auto& l = lines_[i];
      if (text::starts_with_word(l.text, "@startuml")) {
        if (open) {
          throw SyntaxError("nested @startuml", l.number, l.column);
        }
        if (end_ != 0) {
          throw UnsupportedConstructError("multiple diagrams in one file", l.number, l.column);
        }
        open = i;
      } else if (text::starts_with_word(l.text, "@enduml")) {
        if (!open) throw SyntaxError("@enduml without @startuml", l.number, l.column);
        begin_ = *open + 1;
        end_ = i;
        open.reset();
      }
    }
    if (open) {
      const auto& l = lines_[*open];
      throw SyntaxError("@startuml without matching @enduml", l.number, l.column);
    }
    if (end_ == 0) {
      begin_ = 0;
      end_ = lines_.size();
    }
  }

  [[noreturn]] void unsupported(const Line& l, const std::string& what) {
    throw UnsupportedConstructError(what, l.number, l.column);
  }

  // Returns the index of the last line consumed.
  std::size_t statement(std::size_t i) {
    const Line& l = lines_[i];
    const std::string& s = l.text;
    if (s.empty() || s[0] == '\'') return i;
    if (s.rfind("/'", 0) == 0) return skip_block_comment(i);
    if (s[0] == ':') return activity(i);
    if (s[0] == '|') unsupported(l, "swimlane");
    if (s.rfind("->", 0) == 0) unsupported(l, "arrow label");

    if (text::starts_with_word(s, "title") || text::starts_with_word(s, "skinparam")) return i;
    if (text::starts_with_word(s, "start")) return i;
    if (text::starts_with_word(s, "stop")) {
      terminal(l, "stop");
      return i;
    }
    if (text::starts_with_word(s, "fork")) unsupported(l, "fork");
    if (text::starts_with_word(s, "split")) unsupported(l, "split");
    if (text::starts_with_word(s, "partition")) unsupported(l, "partition");
    if (text::starts_with_word(s, "note") || text::starts_with_word(s, "floating")) {
      unsupported(l, "note");
    }
    if (text::starts_with_word(s, "while") || text::starts_with_word(s, "endwhile")) {
      unsupported(l, "while loop");
    }
    if (text::starts_with_word(s, "switch") || text::starts_with_word(s, "case") ||
        text::starts_with_word(s, "endswitch")) {
      unsupported(l, "switch");
    }
    if (text::starts_with_word(s, "group")) unsupported(l, "group");
    if (text::starts_with_word(s, "detach") || text::starts_with_word(s, "kill")) {
      unsupported(l, text::normalize(s.substr(0, s.find_first_of(" ;"))));
    }
    if (text::starts_with_word(s, "backward") || text::starts_with_word(s, "break")) {
      unsupported(l, "repeat " + text::normalize(s.substr(0, s.find_first_of(" ;:("))));
    }
    if (text::starts_with_word(s, "if")) {
      open_if(l);
      return i;
    }
    if (text::starts_with_word(s, "elseif")) {
      else_if(l, s.substr(6), l.column + 6);
      return i;
    }
    if (text::starts_with_word(s, "else")) {
      std::string rest = text::trim(s.substr(4));
      if (text::starts_with_word(rest, "if")) {
        const std::size_t off = s.find("if", 4);
        else_if(l, s.substr(off + 2), l.column + static_cast<int>(off) + 2);
      } else {
        open_else(l, s.substr(4), l.column + 4);
      }
      return i;
    }
    if (text::starts_with_word(s, "endif")) {
      close_if(l);
      return i;
    }
    if (text::starts_with_word(s, "end")) {
      const std::string rest = text::normalize(s.substr(3));
      if (rest == "if") {
        close_if(l);
        return i;
      }
      if (rest.rfind("fork", 0) == 0) unsupported(l, "fork");
      if (rest.rfind("split", 0) == 0) unsupported(l, "split");
      if (rest.rfind("note", 0) == 0) unsupported(l, "note");
      if (rest.rfind("while", 0) == 0) unsupported(l, "while loop");
      if (rest.rfind("group", 0) == 0) unsupported(l, "group");
      if (rest.empty() || rest == ";") {
        terminal(l, "end");
        return i;
      }
      throw SyntaxError("unrecognized statement '" + s + "'", l.number, l.column);
    }
    if (text::starts_with_word(s, "repeatwhile")) {
      close_repeat(l, s.substr(11), l.column + 11);
      return i;
    }
    if (text::starts_with_word(s, "repeat")) {
      std::string rest = text::trim(s.substr(6));
      if (text::starts_with_word(rest, "while")) {
        const std::size_t off = s.find("while", 6);
        close_repeat(l, s.substr(off + 5), l.column + static_cast<int>(off) + 5);
        return i;
      }
      frames_.push_back(RepeatFrame{std::nullopt, l.number, l.column});
      if (!rest.empty()) {
        if (rest[0] != ':') {
          throw SyntaxError("expected activity after 'repeat'", l.number, l.column + 6);
        }
        return activity_from(i, s.find(':'));
      }
      return i;
    }
    throw SyntaxError("unrecognized statement '" + s + "'", l.number, l.column);
  }

  std::size_t skip_block_comment(std::size_t i) {
    for (std::size_t j = i; j < end_; ++j) {
      const auto& t = lines_[j].text;
      const std::size_t from = j == i ? 2 : 0;
      if (t.find("'/", from) != std::string::npos) return j;
    }
    throw SyntaxError("unterminated block comment", lines_[i].number, lines_[i].column);
  }

  std::size_t activity(std::size_t i) { return activity_from(i, 0); }

  // `offset` is the position of ':' within the trimmed line.
  std::size_t activity_from(std::size_t i, std::size_t offset) {
    const Line& first = lines_[i];
    std::string body = first.text.substr(offset + 1);
    std::size_t j = i;
    while (body.empty() || body.back() != ';') {
      ++j;
      if (j >= end_) {
        throw SyntaxError("activity is missing its terminating ';'", first.number,
                          first.column + static_cast<int>(offset));
      }
      body += "\n" + lines_[j].text;
    }
    body.pop_back();
    std::string attr = text::trim(body);
    if (attr.empty()) {
      throw SyntaxError("empty activity", first.number, first.column + static_cast<int>(offset));
    }
    add_node(std::move(attr));
    pending_ = {Exit{last_node_, kSequentialCondition, false}};
    return j;
  }

  void terminal(const Line& l, const char* word) {
    (void)l;
    add_node(word);
    pending_.clear();
  }

  // Reads `( ... )` with nested parentheses starting at or after `pos`.
  std::optional<std::string> parenthesized(const std::string& s, std::size_t& pos, const Line& l,
                                           int base_column) {
    while (pos < s.size() && (s[pos] == ' ' || s[pos] == '\t')) ++pos;
    if (pos >= s.size() || s[pos] != '(') return std::nullopt;
    const std::size_t open = pos;
    int depth = 0;
    for (; pos < s.size(); ++pos) {
      if (s[pos] == '(') ++depth;
      if (s[pos] == ')' && --depth == 0) {
        ++pos;
        return text::trim(s.substr(open + 1, pos - open - 2));
      }
    }
    throw SyntaxError("unbalanced parenthesis", l.number, base_column + static_cast<int>(open));
  }

  bool keyword_at(const std::string& s, std::size_t& pos, std::string_view word) {
    std::size_t p = pos;
    while (p < s.size() && (s[p] == ' ' || s[p] == '\t')) ++p;
    if (!text::starts_with_word(std::string_view(s).substr(p), word)) return false;
    pos = p + word.size();
    return true;
  }

  void expect_end(const std::string& s, std::size_t pos, const Line& l, int base_column) {
    while (pos < s.size() && (s[pos] == ' ' || s[pos] == '\t' || s[pos] == ';')) ++pos;
    if (pos != s.size()) {
      throw SyntaxError("unexpected text '" + s.substr(pos) + "'", l.number,
                        base_column + static_cast<int>(pos));
    }
  }

  // Parses `(cond) then (label)?` and returns {cond, label}.
  std::pair<std::string, std::string> condition_then(const std::string& s, const Line& l,
                                                     int base_column) {
    std::size_t pos = 0;
    auto cond = parenthesized(s, pos, l, base_column);
    if (!cond || cond->empty()) {
      throw SyntaxError("expected '(condition)'", l.number, base_column + static_cast<int>(pos));
    }
    if (!keyword_at(s, pos, "then")) {
      throw SyntaxError("expected 'then'", l.number, base_column + static_cast<int>(pos));
    }
    auto label = parenthesized(s, pos, l, base_column);
    expect_end(s, pos, l, base_column);
    return {*cond, label && !label->empty() ? *label : kDefaultThen};
  }

  void open_if(const Line& l) {
    const std::string rest = l.text.substr(2);
    auto [cond, label] = condition_then(rest, l, l.column + 2);
    add_node(cond);
    frames_.push_back(IfFrame{last_node_, {}, false, l.number, l.column});
    pending_ = {Exit{last_node_, label, true}};
  }

  IfFrame& top_if(const Line& l, const char* keyword) {
    if (frames_.empty() || !std::holds_alternative<IfFrame>(frames_.back())) {
      throw SyntaxError(std::string("'") + keyword + "' without matching 'if'", l.number, l.column);
    }
    return std::get<IfFrame>(frames_.back());
  }

  void else_if(const Line& l, std::string rest, int base_column) {
    IfFrame& f = top_if(l, "elseif");
    if (f.has_else) throw SyntaxError("'elseif' after 'else'", l.number, l.column);
    auto [cond, label] = condition_then(rest, l, base_column);
    f.collected.insert(f.collected.end(), pending_.begin(), pending_.end());
    pending_ = {Exit{f.decision, kDefaultElse, true}};
    add_node(cond);
    f.decision = last_node_;
    pending_ = {Exit{last_node_, label, true}};
  }

  void open_else(const Line& l, std::string rest, int base_column) {
    IfFrame& f = top_if(l, "else");
    if (f.has_else) throw SyntaxError("duplicate 'else'", l.number, l.column);
    std::size_t pos = 0;
    auto label = parenthesized(rest, pos, l, base_column);
    expect_end(rest, pos, l, base_column);
    f.has_else = true;
    f.collected.insert(f.collected.end(), pending_.begin(), pending_.end());
    pending_ = {Exit{f.decision, label && !label->empty() ? *label : kDefaultElse, true}};
  }

  void close_if(const Line& l) {
    IfFrame f = std::move(top_if(l, "endif"));
    frames_.pop_back();
    f.collected.insert(f.collected.end(), pending_.begin(), pending_.end());
    if (!f.has_else) f.collected.push_back(Exit{f.decision, kDefaultElse, true});
    pending_ = std::move(f.collected);
  }

  void close_repeat(const Line& l, std::string rest, int base_column) {
    if (frames_.empty() || !std::holds_alternative<RepeatFrame>(frames_.back())) {
      throw SyntaxError("'repeat while' without matching 'repeat'", l.number, l.column);
    }
    RepeatFrame f = std::get<RepeatFrame>(frames_.back());
    frames_.pop_back();
    if (!f.head) throw SyntaxError("empty repeat body", f.line, f.column);

    std::size_t pos = 0;
    auto cond = parenthesized(rest, pos, l, base_column);
    if (!cond || cond->empty()) {
      throw SyntaxError("expected '(condition)'", l.number, base_column + static_cast<int>(pos));
    }
    std::optional<std::string> again;
    std::optional<std::string> leave;
    if (keyword_at(rest, pos, "is")) again = parenthesized(rest, pos, l, base_column);
    if (keyword_at(rest, pos, "not")) leave = parenthesized(rest, pos, l, base_column);
    expect_end(rest, pos, l, base_column);

    add_node(*cond);
    data_.edges.push_back(
        Edge{last_node_, *f.head, again && !again->empty() ? *again : kDefaultThen});
    pending_ = {Exit{last_node_, leave && !leave->empty() ? *leave : kDefaultElse, true}};
  }

  void add_node(std::string attr) {
    const NodeId id = "n" + std::to_string(++counter_);
    data_.nodes.push_back(NodeSpec{id, std::move(attr), std::nullopt});
    if (data_.root.empty()) data_.root = id;
    for (auto& e : pending_) data_.edges.push_back(Edge{e.from, id, e.label});
    pending_.clear();
    for (auto& f : frames_) {
      if (auto* r = std::get_if<RepeatFrame>(&f); r && !r->head) r->head = id;
    }
    last_node_ = id;
  }

  void finish() {
    if (!frames_.empty()) {
      const auto [what, line, column] = std::visit(
          [](const auto& f) {
            using T = std::decay_t<decltype(f)>;
            return std::tuple{std::is_same_v<T, IfFrame> ? "'if' without 'endif'"
                                                         : "'repeat' without 'repeat while'",
                              f.line, f.column};
          },
          frames_.back());
      throw SyntaxError(what, line, column);
    }
    if (data_.nodes.empty()) {
      const int line = end_ < lines_.size() ? lines_[end_].number : static_cast<int>(lines_.size());
      throw SyntaxError("diagram contains no nodes", line, 1);
    }
    // Branch exits left open at the end of the diagram need a node to land on.
    bool open_branch = false;
    for (const auto& e : pending_) open_branch = open_branch || e.branch;
    if (open_branch) add_node("end");
  }

  std::string_view source_;
  std::vector<Line> lines_;
  std::vector<std::string> raw_;
  std::size_t begin_ = 0;
  std::size_t end_ = 0;
  FlowchartData data_;
  std::vector<Exit> pending_;
  std::vector<Frame> frames_;
  NodeId last_node_;
  int counter_ = 0;
};

}  // namespace

Flowchart parse_plantuml(std::string_view source, std::string flowchart_id) {
  return Parser(source, std::move(flowchart_id)).run();
}

}  // namespace flowdialog::ingest
